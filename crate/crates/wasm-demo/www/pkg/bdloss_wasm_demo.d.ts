/* tslint:disable */
/* eslint-disable */

/**
 * One phantom, a shifted prediction of its split, and the loss of that
 * prediction.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    assd_mm(): number;
    depth(): number;
    height(): number;
    loss(): number;
    /**
     * Slice through the meatus point.
     */
    meatus_slice(): number;
    /**
     * Generates the phantom drawn from the default distribution with `seed`.
     */
    constructor(seed: bigint);
    /**
     * Moves the predicted split plane by `shift` voxels, softens it with
     * logit `margin`, and evaluates the loss at temperature `tau`.
     */
    predict(shift: number, margin: number, tau: number): void;
    /**
     * RGBA pixels of slice `z`. Layer 0: image with the predicted split
     * (red intrameatal, blue extrameatal) and the true split boundary in
     * green. Layer 1: the boundary detector. Layer 2: distance to the true
     * split boundary.
     */
    render(z: number, layer: number): Uint8Array;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_assd_mm: (a: number) => number;
    readonly demo_depth: (a: number) => number;
    readonly demo_height: (a: number) => number;
    readonly demo_loss: (a: number) => number;
    readonly demo_meatus_slice: (a: number) => number;
    readonly demo_new: (a: bigint) => [number, number, number];
    readonly demo_predict: (a: number, b: number, c: number, d: number) => [number, number];
    readonly demo_render: (a: number, b: number, c: number) => [number, number];
    readonly demo_width: (a: number) => number;
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
