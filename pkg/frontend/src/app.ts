/** Browser UI: tri-state mask toggles with a live ground-truth preview. */

import { ConflictError, FramePayload, LabelingClient } from "./api.js";
import { composeGroundTruth, nextState, statesFromWire, statesToWire, ToggleState } from "./algebra.js";
import { decodeRle } from "./rle.js";

const PREVIEW_SCALE = 8;

class FrameView {
    states = new Map<number, ToggleState>();
    masks = new Map<number, Uint8Array>();
    dirty = false;
    version = 0;

    constructor(readonly payload: FramePayload) {
        for (const mask of payload.masks) {
            this.masks.set(mask.index, decodeRle(mask.rle, payload.width, payload.height));
            this.states.set(mask.index, "neutral");
        }
    }

    applySaved(states: Record<string, string>, version: number): void {
        this.version = version;
        for (const [index, state] of statesFromWire(states)) {
            this.states.set(index, state);
        }
    }

    toggle(index: number): void {
        const state = this.states.get(index);
        if (state === undefined) {
            return;
        }
        this.states.set(index, nextState(state));
        this.dirty = true;
    }

    groundTruth(): Uint8Array {
        return composeGroundTruth(this.masks, this.states,
                                  this.payload.width * this.payload.height);
    }
}

class App {
    client: LabelingClient | null = null;
    frameIds: number[] = [];
    position = 0;
    view: FrameView | null = null;

    constructor(readonly root: Document) {
        this.el("connect").addEventListener("click", () => void this.connect());
        this.el("prev").addEventListener("click", () => void this.step(-1));
        this.el("next").addEventListener("click", () => void this.step(1));
        this.el("save").addEventListener("click", () => void this.save());
        this.el("retry").addEventListener("click", () => void this.loadCurrent());
        root.addEventListener("keydown", (ev) => {
            const event = ev as KeyboardEvent;
            if (event.key === "ArrowLeft") void this.step(-1);
            if (event.key === "ArrowRight") void this.step(1);
            if (event.key === "s") void this.save();
        });
    }

    el(id: string): HTMLElement {
        const node = this.root.getElementById(id);
        if (!node) throw new Error(`missing element #${id}`);
        return node;
    }

    notice(text: string, isError = false): void {
        const banner = this.el("notice");
        banner.textContent = text;
        banner.className = isError ? "notice error" : "notice";
        this.el("retry").style.display = isError ? "inline-block" : "none";
    }

    async connect(): Promise<void> {
        const base = (this.el("server") as HTMLInputElement).value.replace(/\/$/, "");
        this.client = new LabelingClient(base);
        try {
            this.frameIds = await this.client.frameIds();
        } catch (err) {
            this.notice(`cannot reach ${base}: ${err}`, true);
            return;
        }
        this.position = 0;
        await this.loadCurrent();
    }

    async step(delta: number): Promise<void> {
        if (!this.frameIds.length) return;
        const next = this.position + delta;
        if (next < 0 || next >= this.frameIds.length) return;
        this.position = next;
        await this.loadCurrent();
    }

    async loadCurrent(): Promise<void> {
        if (!this.client || !this.frameIds.length) return;
        const id = this.frameIds[this.position];
        let payload: FramePayload;
        try {
            payload = await this.client.frame(id);
        } catch (err) {
            if (String(err).includes("404")) {
                this.notice(`frame ${id} missing on server, skipping`);
                this.frameIds.splice(this.position, 1);
                if (this.position >= this.frameIds.length) this.position = this.frameIds.length - 1;
                if (this.frameIds.length) await this.loadCurrent();
                return;
            }
            this.notice(`network error loading frame ${id}: ${err}`, true);
            return;
        }
        this.view = new FrameView(payload);
        try {
            const label = await this.client.label(id);
            this.view.applySaved(label.states, label.version);
        } catch {
            // unlabeled frame: stays all-neutral with a black preview
        }
        this.notice(`frame ${id} (${this.position + 1}/${this.frameIds.length})`);
        this.renderImages();
        this.renderToggles();
        this.renderPreview();
        this.renderStatus();
    }

    async save(): Promise<void> {
        if (!this.client || !this.view || !this.view.dirty) return;
        const id = this.view.payload.frame_id;
        try {
            const result = await this.client.saveLabel(
                id, statesToWire(this.view.states), this.view.version);
            this.view.version = result.version;
            this.view.dirty = false;
            this.renderStatus();
            await this.step(1);          // auto-advance after a successful save
        } catch (err) {
            if (err instanceof ConflictError) {
                this.notice(`frame ${id} changed elsewhere (server version `
                    + `${err.serverVersion}); reload before saving`, true);
            } else {
                this.notice(`save failed, edits kept: ${err}`, true);
            }
        }
    }

    renderImages(): void {
        if (!this.view) return;
        (this.el("original") as HTMLImageElement).src =
            "data:image/png;base64," + this.view.payload.original_image_b64;
        (this.el("annotated") as HTMLImageElement).src =
            "data:image/png;base64," + this.view.payload.annotated_image_b64;
    }

    renderToggles(): void {
        if (!this.view) return;
        const bar = this.el("toggles");
        bar.textContent = "";
        for (const mask of this.view.payload.masks) {
            const button = this.root.createElement("button");
            button.textContent = String(mask.index);
            button.className = "toggle " + this.view.states.get(mask.index);
            button.addEventListener("click", () => {
                if (!this.view) return;
                this.view.toggle(mask.index);
                button.className = "toggle " + this.view.states.get(mask.index);
                this.renderPreview();
                this.renderStatus();
            });
            bar.appendChild(button);
        }
    }

    renderPreview(): void {
        if (!this.view) return;
        const { width, height } = this.view.payload;
        const canvas = this.el("preview") as HTMLCanvasElement;
        canvas.width = width * PREVIEW_SCALE;
        canvas.height = height * PREVIEW_SCALE;
        const ctx = canvas.getContext("2d");
        if (!ctx) return;
        ctx.fillStyle = "#000";
        ctx.fillRect(0, 0, canvas.width, canvas.height);
        ctx.fillStyle = "#fff";
        const gt = this.view.groundTruth();
        for (let y = 0; y < height; y++) {
            for (let x = 0; x < width; x++) {
                if (gt[y * width + x]) {
                    ctx.fillRect(x * PREVIEW_SCALE, y * PREVIEW_SCALE,
                                 PREVIEW_SCALE, PREVIEW_SCALE);
                }
            }
        }
    }

    renderStatus(): void {
        if (!this.view) return;
        this.el("status").textContent = this.view.dirty
            ? "unsaved changes"
            : `saved (version ${this.view.version})`;
    }
}

if (typeof document !== "undefined") {
    new App(document);
}

export { App, FrameView };
