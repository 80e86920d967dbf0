/** Ambient declaration for the optional transformers.js backend. The package
 * is not a dependency; it is imported dynamically only when a real model id
 * is requested. */
declare module "@xenova/transformers" {
  export function pipeline(task: string, model?: string,
                           options?: Record<string, unknown>): Promise<any>;
}
