/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_viewer_free: (a: number, b: number) => void;
export const viewer_clearSelection: (a: number) => void;
export const viewer_click: (a: number, b: number, c: number) => number;
export const viewer_exportSelection: (a: number) => [number, number, number, number];
export const viewer_fromPly: (a: number, b: number) => [number, number, number];
export const viewer_gaussianCount: (a: number) => number;
export const viewer_new: (a: number) => [number, number, number];
export const viewer_orbit: (a: number, b: number, c: number) => void;
export const viewer_render: (a: number) => [number, number, number, number];
export const viewer_segment: (a: number) => [number, number, number, number];
export const viewer_setThreshold: (a: number, b: number) => [number, number, number];
export const viewer_size: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
