/* tslint:disable */
/* eslint-disable */

/**
 * Analytic and tabulated Q8 second derivatives at `(xi, eta)`, plus the
 * table entries known to disagree with the analytic basis.
 */
export function q8_second_derivatives(xi: number, eta: number): string;

/**
 * Monolithic solve of the single notch tension specimen on a structured
 * mesh. Returns the load-reaction curve and the final element damage.
 */
export function solve_single_notch(elem_size: number, quadratic: boolean, increments: number, lf_max: number): string;

/**
 * Causality of a randomly initialised TCN: perturbs the strain input at
 * one increment and reports the output change at every increment.
 */
export function tcn_causality(dil: number, k_size: number, num_filters: number, steps: number, perturb_step: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly q8_second_derivatives: (a: number, b: number) => [number, number];
    readonly solve_single_notch: (a: number, b: number, c: number, d: number) => [number, number];
    readonly tcn_causality: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
