/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_session_free: (a: number, b: number) => void;
export const rotation_sweep: (a: number, b: number, c: number, d: number) => [number, number];
export const session_element_count: (a: number) => number;
export const session_element_quality: (a: number) => [number, number];
export const session_grad_rms: (a: number) => number;
export const session_iteration: (a: number) => number;
export const session_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const session_objective: (a: number) => number;
export const session_outlines: (a: number, b: number) => [number, number];
export const session_step: (a: number) => number;
export const session_termination: (a: number) => [number, number];
export const triangle_quality_field: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
