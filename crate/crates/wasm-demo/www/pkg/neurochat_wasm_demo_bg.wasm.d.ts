/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_epochreport_free: (a: number, b: number) => void;
export const __wbg_get_epochreport_alpha: (a: number) => number;
export const __wbg_get_epochreport_beta: (a: number) => number;
export const __wbg_get_epochreport_engagement: (a: number) => number;
export const __wbg_get_epochreport_theta: (a: number) => number;
export const __wbg_set_epochreport_alpha: (a: number, b: number) => void;
export const __wbg_set_epochreport_beta: (a: number, b: number) => void;
export const __wbg_set_epochreport_engagement: (a: number, b: number) => void;
export const __wbg_set_epochreport_theta: (a: number, b: number) => void;
export const analyze_synthetic: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const epochreport_psd: (a: number) => [number, number];
export const filter_response_db: (a: number, b: number) => [number, number];
export const normalize: (a: number, b: number, c: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
