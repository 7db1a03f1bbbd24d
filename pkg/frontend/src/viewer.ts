/**
 * Viewer application: browse volumes slice by slice, place prompt points,
 * run propagation jobs against the service, and inspect the mask overlay.
 */
import {
  api,
  sliceExtent,
  sliceSize,
  type PromptPoint,
  type View,
  type VolumeInfo,
} from './api.js';
import { pollJob } from './pollJob.js';
import { canvasToSlice, drawComposite, drawPrompts, loadImage } from './overlay.js';

const VIEWS: View[] = ['axial', 'coronal', 'sagittal'];
const POLL_INTERVAL_MS = 400;

interface Elements {
  volumeSelect: HTMLSelectElement;
  viewSelect: HTMLSelectElement;
  indexSlider: HTMLInputElement;
  indexLabel: HTMLElement;
  wlInput: HTMLInputElement;
  wwInput: HTMLInputElement;
  maskToggle: HTMLInputElement;
  canvas: HTMLCanvasElement;
  propagateBtn: HTMLButtonElement;
  cancelBtn: HTMLButtonElement;
  clearBtn: HTMLButtonElement;
  downloadLink: HTMLAnchorElement;
  status: HTMLElement;
}

export class ViewerApp {
  private els!: Elements;
  private volumes: VolumeInfo[] = [];
  private volume: VolumeInfo | null = null;
  private view: View = 'axial';
  private index = 0;
  private wl = 100;
  private ww = 400;
  private points: PromptPoint[] = [];
  private activeJobId: string | null = null;
  // bumped whenever a job produces a new mask, so the overlay URL changes
  // and the browser cannot serve a stale cached PNG
  private maskVersion = 0;
  private renderSeq = 0;

  constructor(private doc: Document = document) {}

  async init(): Promise<void> {
    this.els = this.lookupElements();
    this.wireEvents();
    this.volumes = await api.listVolumes();
    for (const v of this.volumes) {
      const opt = this.doc.createElement('option');
      opt.value = v.id;
      opt.textContent = `${v.id}  (${v.dims.join('x')})`;
      this.els.volumeSelect.appendChild(opt);
    }
    if (this.volumes.length === 0) {
      this.setStatus('no volumes found in the data directory');
      return;
    }
    this.selectVolume(this.volumes[0]);
  }

  private lookupElements(): Elements {
    const must = <T extends HTMLElement>(id: string): T => {
      const el = this.doc.getElementById(id);
      if (!el) throw new Error(`missing element #${id}`);
      return el as T;
    };
    return {
      volumeSelect: must<HTMLSelectElement>('volume'),
      viewSelect: must<HTMLSelectElement>('view'),
      indexSlider: must<HTMLInputElement>('slice-index'),
      indexLabel: must<HTMLElement>('slice-label'),
      wlInput: must<HTMLInputElement>('wl'),
      wwInput: must<HTMLInputElement>('ww'),
      maskToggle: must<HTMLInputElement>('show-mask'),
      canvas: must<HTMLCanvasElement>('slice-canvas'),
      propagateBtn: must<HTMLButtonElement>('propagate'),
      cancelBtn: must<HTMLButtonElement>('cancel'),
      clearBtn: must<HTMLButtonElement>('clear-points'),
      downloadLink: must<HTMLAnchorElement>('download-mask'),
      status: must<HTMLElement>('status'),
    };
  }

  private wireEvents(): void {
    const els = this.els;
    for (const view of VIEWS) {
      const opt = this.doc.createElement('option');
      opt.value = view;
      opt.textContent = view;
      els.viewSelect.appendChild(opt);
    }
    els.volumeSelect.addEventListener('change', () => {
      const v = this.volumes.find((x) => x.id === els.volumeSelect.value);
      if (v) this.selectVolume(v);
    });
    els.viewSelect.addEventListener('change', () => {
      this.setView(els.viewSelect.value as View);
    });
    els.indexSlider.addEventListener('input', () => {
      this.index = Number(els.indexSlider.value);
      this.points = []; // prompts belong to one slice
      this.updateSliceLabel();
      void this.render();
    });
    const onWindowChange = () => {
      const wl = Number(els.wlInput.value);
      const ww = Number(els.wwInput.value);
      if (!Number.isFinite(wl) || !Number.isFinite(ww) || ww <= 0) return;
      this.wl = wl;
      this.ww = ww;
      void this.render();
    };
    els.wlInput.addEventListener('change', onWindowChange);
    els.wwInput.addEventListener('change', onWindowChange);
    els.maskToggle.addEventListener('change', () => void this.render());
    els.canvas.addEventListener('click', (ev) => this.onCanvasClick(ev));
    els.propagateBtn.addEventListener('click', () => void this.propagate());
    els.cancelBtn.addEventListener('click', () => void this.cancelActive());
    els.clearBtn.addEventListener('click', () => {
      this.points = [];
      void this.render();
    });
  }

  private selectVolume(v: VolumeInfo): void {
    this.volume = v;
    this.els.volumeSelect.value = v.id;
    this.els.downloadLink.href = api.maskDownloadUrl(v.id);
    this.resetSlicePosition();
  }

  private setView(view: View): void {
    this.view = view;
    this.resetSlicePosition();
  }

  private resetSlicePosition(): void {
    if (!this.volume) return;
    const extent = sliceExtent(this.volume.dims, this.view);
    this.index = Math.floor(extent / 2);
    this.points = [];
    this.els.indexSlider.min = '0';
    this.els.indexSlider.max = String(extent - 1);
    this.els.indexSlider.value = String(this.index);
    this.updateSliceLabel();
    void this.render();
  }

  private updateSliceLabel(): void {
    if (!this.volume) return;
    const extent = sliceExtent(this.volume.dims, this.view);
    this.els.indexLabel.textContent = `${this.view} ${this.index + 1} / ${extent}`;
  }

  private async render(): Promise<void> {
    const v = this.volume;
    if (!v) return;
    const seq = ++this.renderSeq; // stale responses must not repaint
    const baseUrl = api.sliceUrl(v.id, this.view, this.index, this.wl, this.ww);
    const maskUrl = `${api.maskSliceUrl(v.id, this.view, this.index)}&v=${this.maskVersion}`;
    try {
      const [base, mask] = await Promise.all([
        loadImage(baseUrl),
        // 404s until the first mask exists for this volume
        this.els.maskToggle.checked
          ? loadImage(maskUrl).catch(() => null)
          : Promise.resolve(null),
      ]);
      if (seq !== this.renderSeq) return;
      drawComposite(this.els.canvas, base, mask);
      drawPrompts(this.els.canvas, this.points, base.width, base.height);
    } catch (err) {
      if (seq === this.renderSeq) this.setStatus(describe(err));
    }
  }

  private onCanvasClick(ev: MouseEvent): void {
    if (!this.volume) return;
    const rect = this.els.canvas.getBoundingClientRect();
    const { rows, cols } = sliceSize(this.volume.dims, this.view);
    const hit = canvasToSlice(
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      rect.width,
      rect.height,
      cols,
      rows,
    );
    if (!hit) return;
    this.points.push({ row: hit.row, col: hit.col, polarity: !ev.shiftKey });
    void this.render();
  }

  private async propagate(): Promise<void> {
    const v = this.volume;
    if (!v || this.activeJobId) return;
    if (!this.points.some((p) => p.polarity)) {
      this.setStatus('place at least one foreground point first (plain click)');
      return;
    }
    try {
      const jobId = await api.startPropagation(v.id, this.view, this.index, this.points);
      this.activeJobId = jobId;
      this.setBusy(true);
      this.setStatus(`job ${jobId} queued`);
      const job = await pollJob(jobId, POLL_INTERVAL_MS, (j) =>
        this.setStatus(`job ${j.id} ${j.status}, progress ${j.progress}`),
      );
      if (job.status === 'done') {
        this.maskVersion += 1;
        this.points = [];
        this.setStatus(`job ${job.id} done, mask ready`);
      } else {
        this.setStatus(`job ${job.id} ${job.status}`);
      }
    } catch (err) {
      this.setStatus(describe(err));
    } finally {
      this.activeJobId = null;
      this.setBusy(false);
      await this.render();
    }
  }

  private async cancelActive(): Promise<void> {
    if (!this.activeJobId) return;
    try {
      const outcome = await api.cancelJob(this.activeJobId);
      this.setStatus(`job ${outcome.job_id} ${outcome.status}`);
    } catch (err) {
      this.setStatus(describe(err));
    }
  }

  private setBusy(busy: boolean): void {
    this.els.propagateBtn.disabled = busy;
    this.els.cancelBtn.disabled = !busy;
  }

  private setStatus(text: string): void {
    this.els.status.textContent = text;
  }
}

function describe(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
