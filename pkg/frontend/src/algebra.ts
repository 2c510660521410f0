/** Tri-state mask toggles and the ground-truth composition algebra. */

export type ToggleState = "neutral" | "added" | "subtracted";

/** One click adds, a second subtracts, a third resets to neutral. */
export function nextState(state: ToggleState): ToggleState {
    switch (state) {
        case "neutral": return "added";
        case "added": return "subtracted";
        case "subtracted": return "neutral";
    }
}

/** GT = (OR of added masks) AND NOT (OR of subtracted masks). */
export function composeGroundTruth(
    masks: Map<number, Uint8Array>,
    states: Map<number, ToggleState>,
    pixelCount: number,
): Uint8Array {
    const out = new Uint8Array(pixelCount);
    for (const [index, state] of states) {
        if (state !== "added") {
            continue;
        }
        const mask = masks.get(index);
        if (!mask) {
            throw new Error(`no mask with index ${index}`);
        }
        for (let i = 0; i < pixelCount; i++) {
            if (mask[i]) {
                out[i] = 1;
            }
        }
    }
    for (const [index, state] of states) {
        if (state !== "subtracted") {
            continue;
        }
        const mask = masks.get(index);
        if (!mask) {
            throw new Error(`no mask with index ${index}`);
        }
        for (let i = 0; i < pixelCount; i++) {
            if (mask[i]) {
                out[i] = 0;
            }
        }
    }
    return out;
}

/** Wire form for POST /frames/{id}/label: neutral indices become "reset" so
 *  the server's stored state always mirrors the client's. */
export function statesToWire(states: Map<number, ToggleState>): Record<string, string> {
    const wire: Record<string, string> = {};
    for (const [index, state] of states) {
        wire[String(index)] =
            state === "added" ? "add" : state === "subtracted" ? "subtract" : "reset";
    }
    return wire;
}

export function statesFromWire(wire: Record<string, string>): Map<number, ToggleState> {
    const states = new Map<number, ToggleState>();
    for (const [key, value] of Object.entries(wire)) {
        if (value === "add") {
            states.set(Number(key), "added");
        } else if (value === "subtract") {
            states.set(Number(key), "subtracted");
        }
    }
    return states;
}
