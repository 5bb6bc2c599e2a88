/* tslint:disable */
/* eslint-disable */

export class EpochReport {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Channel-averaged PSD, one bin per Hz from 0 to 128 Hz.
     */
    readonly psd: Float64Array;
    alpha: number;
    beta: number;
    engagement: number;
    theta: number;
}

export function analyze_synthetic(theta_uv: number, alpha_uv: number, beta_uv: number, noise_uv: number, seed: number): EpochReport;

/**
 * Gain in dB of the default filter chain at each frequency.
 */
export function filter_response_db(freqs_hz: Float64Array): Float64Array;

/**
 * `(e - e_min) / (e_max - e_min)` clamped to `[0, 1]`.
 */
export function normalize(e: number, e_min: number, e_max: number): number;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_epochreport_free: (a: number, b: number) => void;
    readonly __wbg_get_epochreport_alpha: (a: number) => number;
    readonly __wbg_get_epochreport_beta: (a: number) => number;
    readonly __wbg_get_epochreport_engagement: (a: number) => number;
    readonly __wbg_get_epochreport_theta: (a: number) => number;
    readonly __wbg_set_epochreport_alpha: (a: number, b: number) => void;
    readonly __wbg_set_epochreport_beta: (a: number, b: number) => void;
    readonly __wbg_set_epochreport_engagement: (a: number, b: number) => void;
    readonly __wbg_set_epochreport_theta: (a: number, b: number) => void;
    readonly analyze_synthetic: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly epochreport_psd: (a: number) => [number, number];
    readonly filter_response_db: (a: number, b: number) => [number, number];
    readonly normalize: (a: number, b: number, c: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
