/* tslint:disable */
/* eslint-disable */

/**
 * Positions and the controls actually applied.
 */
export class Path {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly a_x: Float64Array;
    /**
     * `[x0, y0, x1, y1, ...]`, starting at the initial position.
     */
    readonly positions: Float64Array;
    /**
     * rad/s
     */
    readonly psi_dot: Float64Array;
}

/**
 * A track, its recovered controls and the replay from its first sample.
 */
export class Roundtrip {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly a_x: Float64Array;
    /**
     * Metres.
     */
    readonly max_error: number;
    readonly psi_dot: Float64Array;
    readonly replay: Float64Array;
    readonly truth: Float64Array;
}

/**
 * First hidden unit of both recurrences, step by step.
 */
export class StabilityTrace {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * NaN from the overflow on.
     */
    readonly naive: Float64Array;
    /**
     * First step where the naive recurrence stops being finite, or -1.
     */
    readonly overflow_step: number;
    readonly stabilized: Float64Array;
}

export function laneChange(speed: number, width: number, duration: number, span: number, dt: number): Roundtrip;

/**
 * `[a_max m/s², psi_dot_max deg/s]`.
 */
export function motionLimits(): Float64Array;

export function rolloutPath(speed: number, heading_deg: number, accel: number, yaw_rate_deg: number, steps: number, dt: number, bounded: boolean): Path;

export function slstmTrace(steps: number, seed: number, forget_bias: number): StabilityTrace;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_path_free: (a: number, b: number) => void;
    readonly __wbg_roundtrip_free: (a: number, b: number) => void;
    readonly __wbg_stabilitytrace_free: (a: number, b: number) => void;
    readonly laneChange: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly motionLimits: () => [number, number];
    readonly path_a_x: (a: number) => [number, number];
    readonly path_positions: (a: number) => [number, number];
    readonly path_psi_dot: (a: number) => [number, number];
    readonly rolloutPath: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly roundtrip_a_x: (a: number) => [number, number];
    readonly roundtrip_max_error: (a: number) => number;
    readonly roundtrip_psi_dot: (a: number) => [number, number];
    readonly roundtrip_replay: (a: number) => [number, number];
    readonly roundtrip_truth: (a: number) => [number, number];
    readonly slstmTrace: (a: number, b: number, c: number) => [number, number, number];
    readonly stabilitytrace_naive: (a: number) => [number, number];
    readonly stabilitytrace_overflow_step: (a: number) => number;
    readonly stabilitytrace_stabilized: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
