/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_assd_mm: (a: number) => number;
export const demo_depth: (a: number) => number;
export const demo_height: (a: number) => number;
export const demo_loss: (a: number) => number;
export const demo_meatus_slice: (a: number) => number;
export const demo_new: (a: bigint) => [number, number, number];
export const demo_predict: (a: number, b: number, c: number, d: number) => [number, number];
export const demo_render: (a: number, b: number, c: number) => [number, number];
export const demo_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
