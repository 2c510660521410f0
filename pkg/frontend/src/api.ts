/** Typed client for the labeling HTTP API. */

export interface MaskEntry {
    index: number;
    centroid: [number, number];
    area: number;
    rle: number[];
}

export interface FramePayload {
    frame_id: number;
    width: number;
    height: number;
    original_image_b64: string;
    annotated_image_b64: string;
    masks: MaskEntry[];
}

export interface LabelPayload {
    frame_id: number;
    states: Record<string, string>;
    gt_rle: number[];
    version: number;
    width: number;
    height: number;
}

export interface SaveResult {
    gt_rle: number[];
    version: number;
    width: number;
    height: number;
}

export class ConflictError extends Error {
    constructor(readonly serverVersion: number) {
        super(`label changed on the server (version ${serverVersion})`);
    }
}

export class LabelingClient {
    constructor(readonly baseUrl: string) {}

    private async getJson<T>(path: string): Promise<T> {
        const resp = await fetch(this.baseUrl + path);
        if (!resp.ok) {
            throw new Error(`GET ${path}: ${resp.status}`);
        }
        return resp.json() as Promise<T>;
    }

    async frameIds(): Promise<number[]> {
        const data = await this.getJson<{ frames: number[] }>("/frames");
        return data.frames;
    }

    frame(id: number): Promise<FramePayload> {
        return this.getJson<FramePayload>(`/frames/${id}`);
    }

    label(id: number): Promise<LabelPayload> {
        return this.getJson<LabelPayload>(`/frames/${id}/label`);
    }

    async saveLabel(id: number, states: Record<string, string>,
                    baseVersion?: number): Promise<SaveResult> {
        const body: Record<string, unknown> = { states };
        if (baseVersion !== undefined) {
            body.base_version = baseVersion;
        }
        const resp = await fetch(`${this.baseUrl}/frames/${id}/label`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
        if (resp.status === 409) {
            const data = await resp.json();
            throw new ConflictError(data.version);
        }
        if (!resp.ok) {
            throw new Error(`POST /frames/${id}/label: ${resp.status}`);
        }
        return resp.json() as Promise<SaveResult>;
    }
}
