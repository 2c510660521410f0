/** Row-major run-length encoding shared with the backend: runs alternate
 *  zero-run then one-run, always starting with the zero-run (possibly 0). */

export function decodeRle(runs: number[], width: number, height: number): Uint8Array {
    const out = new Uint8Array(width * height);
    let pos = 0;
    let value = 0;
    for (const run of runs) {
        if (value === 1) {
            out.fill(1, pos, pos + run);
        }
        pos += run;
        value = 1 - value;
    }
    if (pos !== width * height) {
        throw new Error(`RLE covers ${pos} pixels, expected ${width * height}`);
    }
    return out;
}

export function encodeRle(bitmap: Uint8Array): number[] {
    if (bitmap.length === 0) {
        return [];
    }
    const runs: number[] = [];
    if (bitmap[0] === 1) {
        runs.push(0);
    }
    let current = bitmap[0];
    let length = 1;
    for (let i = 1; i < bitmap.length; i++) {
        if (bitmap[i] === current) {
            length++;
        } else {
            runs.push(length);
            current = bitmap[i];
            length = 1;
        }
    }
    runs.push(length);
    return runs;
}

export function bitmapsEqual(a: Uint8Array, b: Uint8Array): boolean {
    if (a.length !== b.length) {
        return false;
    }
    for (let i = 0; i < a.length; i++) {
        if (a[i] !== b[i]) {
            return false;
        }
    }
    return true;
}
