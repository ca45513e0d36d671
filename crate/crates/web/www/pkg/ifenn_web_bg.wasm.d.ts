/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const q8_second_derivatives: (a: number, b: number) => [number, number];
export const solve_single_notch: (a: number, b: number, c: number, d: number) => [number, number];
export const tcn_causality: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
