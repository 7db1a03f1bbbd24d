/**
 * Typed client for the segmentation service HTTP API.
 *
 * All calls are same-origin: the service mounts this app as its static
 * directory, so paths stay relative and no base URL configuration is needed.
 */

export type View = 'axial' | 'coronal' | 'sagittal';

export type JobStatus = 'queued' | 'running' | 'done' | 'failed' | 'canceled';

export interface VolumeInfo {
  id: string;
  dims: [number, number, number];
  spacing: [number, number, number];
}

export interface PromptPoint {
  row: number;
  col: number;
  polarity: boolean; // true marks foreground
}

export interface Job {
  id: string;
  kind: string;
  volume_id: string;
  status: JobStatus;
  inputs_digest: string;
  outputs_ref: string | null;
  error: string | null;
  progress: number;
}

export interface CancelOutcome {
  job_id: string;
  status: string; // "canceled" when it never ran, "canceling" while it winds down
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = 'ApiError';
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(path, init);
  if (!res.ok) {
    let detail = `HTTP ${res.status}`;
    try {
      const body = await res.json();
      if (typeof body.detail === 'string') {
        detail = body.detail;
      } else if (body.detail !== undefined) {
        detail = JSON.stringify(body.detail);
      }
    } catch {
      // non-JSON error body, keep the bare status line
    }
    throw new ApiError(res.status, detail);
  }
  return res.json() as Promise<T>;
}

export const api = {
  listVolumes(): Promise<VolumeInfo[]> {
    return request<VolumeInfo[]>('/api/volumes');
  },

  getJob(jobId: string): Promise<Job> {
    return request<Job>(`/api/jobs/${jobId}`);
  },

  /**
   * Submit a propagation job for one annotated slice. Resolves with the job
   * id; the service answers 409 while the volume is busy with another job.
   */
  async startPropagation(
    volumeId: string,
    view: View,
    index: number,
    points: PromptPoint[],
  ): Promise<string> {
    const res = await request<{ job_id: string }>(`/api/volumes/${volumeId}/propagate`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ view, index, points }),
    });
    return res.job_id;
  },

  cancelJob(jobId: string): Promise<CancelOutcome> {
    return request<CancelOutcome>(`/api/jobs/${jobId}`, { method: 'DELETE' });
  },

  sliceUrl(volumeId: string, view: View, index: number, wl = 100, ww = 400): string {
    return `/api/volumes/${volumeId}/slice?view=${view}&index=${index}&wl=${wl}&ww=${ww}`;
  },

  maskSliceUrl(volumeId: string, view: View, index: number): string {
    return `/api/volumes/${volumeId}/mask/slice?view=${view}&index=${index}`;
  },

  maskDownloadUrl(volumeId: string): string {
    return `/api/volumes/${volumeId}/mask`;
  },
};

/** Number of slices a volume has along the view's normal axis. */
export function sliceExtent(dims: [number, number, number], view: View): number {
  const axis = { axial: 2, coronal: 1, sagittal: 0 } as const;
  return dims[axis[view]];
}

/**
 * Pixel size, as rows and columns, of slice images served for a view.
 * Mirrors the service convention so click positions map without a round trip.
 */
export function sliceSize(
  dims: [number, number, number],
  view: View,
): { rows: number; cols: number } {
  const [nx, ny, nz] = dims;
  if (view === 'axial') return { rows: ny, cols: nx };
  if (view === 'coronal') return { rows: nz, cols: nx };
  return { rows: nz, cols: ny };
}
