import { api, type Job } from './api.js';

/**
 * Poll a job until it reaches a terminal state (done / canceled / failed).
 * Resolves with the job object on done or canceled so the caller can tell
 * the two apart, rejects on failure or when the status request itself fails.
 */
export function pollJob(
  jobId: string,
  intervalMs = 500,
  onUpdate?: (job: Job) => void,
): Promise<Job> {
  return new Promise((resolve, reject) => {
    const poll = setInterval(async () => {
      try {
        const job = await api.getJob(jobId);
        onUpdate?.(job);
        if (job.status === 'done' || job.status === 'canceled') {
          clearInterval(poll);
          resolve(job);
        } else if (job.status === 'failed') {
          clearInterval(poll);
          reject(new Error(job.error || `job ${jobId} failed`));
        }
      } catch (err) {
        clearInterval(poll);
        reject(err);
      }
    }, intervalMs);
  });
}
