/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_path_free: (a: number, b: number) => void;
export const __wbg_roundtrip_free: (a: number, b: number) => void;
export const __wbg_stabilitytrace_free: (a: number, b: number) => void;
export const laneChange: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const motionLimits: () => [number, number];
export const path_a_x: (a: number) => [number, number];
export const path_positions: (a: number) => [number, number];
export const path_psi_dot: (a: number) => [number, number];
export const rolloutPath: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const roundtrip_a_x: (a: number) => [number, number];
export const roundtrip_max_error: (a: number) => number;
export const roundtrip_psi_dot: (a: number) => [number, number];
export const roundtrip_replay: (a: number) => [number, number];
export const roundtrip_truth: (a: number) => [number, number];
export const slstmTrace: (a: number, b: number, c: number) => [number, number, number];
export const stabilitytrace_naive: (a: number) => [number, number];
export const stabilitytrace_overflow_step: (a: number) => number;
export const stabilitytrace_stabilized: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
