/* tslint:disable */
/* eslint-disable */

/**
 * A structured mesh of `[-1/2, 1/2]^2` being optimized one Newton step at a time.
 */
export class Session {
    free(): void;
    [Symbol.dispose](): void;
    element_count(): number;
    /**
     * Per-element quality of the current mesh.
     */
    element_quality(): Float64Array;
    grad_rms(): number;
    iteration(): number;
    constructor(n: number, degree: number, h_min: number, size_shape: boolean);
    objective(): number;
    /**
     * Closed boundary polylines, `3 * per_edge` points per element, flattened as x, y.
     */
    outlines(per_edge: number): Float64Array;
    /**
     * One Newton iteration; `false` once converged or stalled.
     */
    step(): boolean;
    termination(): string | undefined;
}

/**
 * Quality of the ideal element of `diag(1/h1^2, 1/h2^2)` rotated by
 * `2 pi i / samples`, for `i = 0..samples`.
 */
export function rotation_sweep(h1: number, h2: number, samples: number, size_shape: boolean): Float64Array;

/**
 * Quality of the triangle `(0,0), (1,0), (x,y)` on an `nx x ny` grid over
 * `[x0,x1] x [y0,y1]`, row by row from `y0`. Invalid inputs give NaN.
 */
export function triangle_quality_field(h1: number, h2: number, angle: number, size_shape: boolean, x0: number, x1: number, y0: number, y1: number, nx: number, ny: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly rotation_sweep: (a: number, b: number, c: number, d: number) => [number, number];
    readonly session_element_count: (a: number) => number;
    readonly session_element_quality: (a: number) => [number, number];
    readonly session_grad_rms: (a: number) => number;
    readonly session_iteration: (a: number) => number;
    readonly session_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly session_objective: (a: number) => number;
    readonly session_outlines: (a: number, b: number) => [number, number];
    readonly session_step: (a: number) => number;
    readonly session_termination: (a: number) => [number, number];
    readonly triangle_quality_field: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
