/* tslint:disable */
/* eslint-disable */

export class Viewer {
    free(): void;
    [Symbol.dispose](): void;
    clearSelection(): void;
    /**
     * Selection size, or -1 when the click hits background.
     */
    click(x: number, y: number): number;
    exportSelection(): Uint8Array;
    static fromPly(bytes: Uint8Array): Viewer;
    gaussianCount(): number;
    /**
     * Starts on the built-in synthetic scene.
     */
    constructor(seed: number);
    orbit(azimuth_deg: number, elevation_deg: number): void;
    /**
     * RGBA pixels of the current view.
     */
    render(): Uint8Array;
    /**
     * RGBA instance overlay at the current threshold.
     */
    segment(): Uint8Array;
    setThreshold(t: number): number;
    static size(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_viewer_free: (a: number, b: number) => void;
    readonly viewer_clearSelection: (a: number) => void;
    readonly viewer_click: (a: number, b: number, c: number) => number;
    readonly viewer_exportSelection: (a: number) => [number, number, number, number];
    readonly viewer_fromPly: (a: number, b: number) => [number, number, number];
    readonly viewer_gaussianCount: (a: number) => number;
    readonly viewer_new: (a: number) => [number, number, number];
    readonly viewer_orbit: (a: number, b: number, c: number) => void;
    readonly viewer_render: (a: number) => [number, number, number, number];
    readonly viewer_segment: (a: number) => [number, number, number, number];
    readonly viewer_setThreshold: (a: number, b: number) => [number, number, number];
    readonly viewer_size: () => number;
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
