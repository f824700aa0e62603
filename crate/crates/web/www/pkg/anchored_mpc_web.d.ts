/* tslint:disable */
/* eslint-disable */

/**
 * Closed loop advanced one sampling instant per call, so the page can draw
 * between solves.
 */
export class Simulation {
    free(): void;
    [Symbol.dispose](): void;
    constructor(toml_src: string);
    /**
     * Reference samples and obstacle outlines.
     */
    scene(): string;
    state(): Float64Array;
    status(): string;
    /**
     * Applies one control move. Returns `null` once the run has ended; the
     * reason is then in [`Simulation::status`].
     */
    step(): string;
}

/**
 * Lie-bracket maneuvers for the differential drive and the fitted exponent.
 */
export function lie_bracket(epsilons: Float64Array, h: number, v_max: number, omega_max: number): string;

/**
 * RRT* among the scenario's (inflated) obstacles.
 */
export function plan(toml_src: string, start_x: number, start_y: number, goal_x: number, goal_y: number, iterations: number, seed: bigint): string;

export function preset(name: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_simulation_free: (a: number, b: number) => void;
    readonly lie_bracket: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly plan: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number, number];
    readonly preset: (a: number, b: number) => [number, number, number, number];
    readonly simulation_new: (a: number, b: number) => [number, number, number];
    readonly simulation_scene: (a: number) => [number, number];
    readonly simulation_state: (a: number) => [number, number];
    readonly simulation_status: (a: number) => [number, number];
    readonly simulation_step: (a: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
