/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_simulation_free: (a: number, b: number) => void;
export const lie_bracket: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const plan: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number, number];
export const preset: (a: number, b: number) => [number, number, number, number];
export const simulation_new: (a: number, b: number) => [number, number, number];
export const simulation_scene: (a: number) => [number, number];
export const simulation_state: (a: number) => [number, number];
export const simulation_status: (a: number) => [number, number];
export const simulation_step: (a: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
