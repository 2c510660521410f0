import { describe, expect, it } from "vitest";

import { composeGroundTruth, nextState, statesFromWire, statesToWire, ToggleState } from "../src/algebra.js";
import { bitmapsEqual, decodeRle, encodeRle } from "../src/rle.js";

function stripeMasks(n: number, width: number, rowsPer: number): Map<number, Uint8Array> {
    const height = n * rowsPer;
    const masks = new Map<number, Uint8Array>();
    for (let i = 0; i < n; i++) {
        const mask = new Uint8Array(width * height);
        mask.fill(1, i * rowsPer * width, (i + 1) * rowsPer * width);
        masks.set(i + 1, mask);
    }
    return masks;
}

// deterministic LCG so test sequences are reproducible
function lcg(seed: number): () => number {
    let state = seed >>> 0;
    return () => {
        state = (state * 1664525 + 1013904223) >>> 0;
        return state / 2 ** 32;
    };
}

describe("tri-state cycle", () => {
    it("cycles neutral -> added -> subtracted -> neutral", () => {
        expect(nextState("neutral")).toBe("added");
        expect(nextState("added")).toBe("subtracted");
        expect(nextState("subtracted")).toBe("neutral");
    });

    it("is period 3 and restores the prior ground truth byte-identically", () => {
        const masks = stripeMasks(6, 8, 2);
        const states = new Map<number, ToggleState>([[1, "added"], [4, "subtracted"]]);
        const before = composeGroundTruth(masks, states, 8 * 12);
        for (const index of [2, 5, 1]) {
            let state = states.get(index) ?? "neutral";
            for (let k = 0; k < 3; k++) {
                state = nextState(state);
            }
            states.set(index, state);
            const after = composeGroundTruth(masks, states, 8 * 12);
            expect(bitmapsEqual(before, after)).toBe(true);
        }
    });
});

describe("composition algebra", () => {
    it("matches (OR added) AND NOT (OR subtracted)", () => {
        const masks = stripeMasks(8, 4, 1);
        const states = new Map<number, ToggleState>([
            [4, "added"], [5, "added"], [6, "subtracted"], [7, "subtracted"],
        ]);
        const gt = composeGroundTruth(masks, states, 4 * 8);
        const expected = new Uint8Array(4 * 8);
        for (let i = 0; i < expected.length; i++) {
            const added = masks.get(4)![i] || masks.get(5)![i];
            const subtracted = masks.get(6)![i] || masks.get(7)![i];
            expected[i] = added && !subtracted ? 1 : 0;
        }
        expect(bitmapsEqual(gt, expected)).toBe(true);
    });

    it("holds against a brute-force composition on random sequences", () => {
        const rand = lcg(7);
        const masks = stripeMasks(6, 5, 2);
        const states = new Map<number, ToggleState>();
        for (let step = 0; step < 300; step++) {
            const index = 1 + Math.floor(rand() * 6);
            states.set(index, nextState(states.get(index) ?? "neutral"));
            const gt = composeGroundTruth(masks, states, 5 * 12);
            for (let i = 0; i < gt.length; i++) {
                let added = false;
                let subtracted = false;
                for (const [idx, state] of states) {
                    if (!masks.get(idx)![i]) continue;
                    if (state === "added") added = true;
                    if (state === "subtracted") subtracted = true;
                }
                expect(Boolean(gt[i])).toBe(added && !subtracted);
            }
        }
    });
});

describe("wire conversion", () => {
    it("round-trips non-neutral states and resets neutral ones", () => {
        const states = new Map<number, ToggleState>([
            [1, "added"], [2, "subtracted"], [3, "neutral"],
        ]);
        const wire = statesToWire(states);
        expect(wire).toEqual({ "1": "add", "2": "subtract", "3": "reset" });
        const back = statesFromWire(wire);
        expect(back.get(1)).toBe("added");
        expect(back.get(2)).toBe("subtracted");
        expect(back.has(3)).toBe(false);
    });
});

describe("RLE", () => {
    it("decodes runs starting with the zero-run", () => {
        const bitmap = decodeRle([2, 3, 1], 3, 2);
        expect(Array.from(bitmap)).toEqual([0, 0, 1, 1, 1, 0]);
    });

    it("round-trips random bitmaps", () => {
        const rand = lcg(99);
        for (let trial = 0; trial < 100; trial++) {
            const width = 1 + Math.floor(rand() * 10);
            const height = 1 + Math.floor(rand() * 10);
            const bitmap = new Uint8Array(width * height);
            for (let i = 0; i < bitmap.length; i++) {
                bitmap[i] = rand() < 0.5 ? 1 : 0;
            }
            const runs = encodeRle(bitmap);
            expect(runs.reduce((a, b) => a + b, 0)).toBe(width * height);
            expect(bitmapsEqual(decodeRle(runs, width, height), bitmap)).toBe(true);
        }
    });

    it("rejects runs that do not cover the bitmap", () => {
        expect(() => decodeRle([3], 2, 2)).toThrow();
    });
});
