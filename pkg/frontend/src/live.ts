import { ApiClient } from "./api.js";
import { RunState } from "./types.js";

export interface LiveHandlers {
  onState: (run: RunState) => void;
  /** Stream lost; the console shows a stale banner while polling. */
  onStale?: (stale: boolean) => void;
}

export interface LiveSubscription {
  close(): void;
}

const POLL_MS = 2000;

/**
 * Subscribe to a run's event stream, refetching full state on each
 * event; on connection loss fall back to polling until the page closes.
 */
export function subscribeRun(
  api: ApiClient,
  base: string,
  runId: string,
  handlers: LiveHandlers,
  pollMs: number = POLL_MS
): LiveSubscription {
  let pollTimer: ReturnType<typeof setInterval> | null = null;
  let closed = false;

  const refresh = () => {
    api
      .getRun(runId)
      .then((run) => {
        if (!closed) handlers.onState(run);
      })
      .catch(() => {
        /* transient fetch failure; next event/poll retries */
      });
  };

  const startPolling = () => {
    if (pollTimer || closed) return;
    handlers.onStale?.(true);
    pollTimer = setInterval(refresh, pollMs);
  };
  const stopPolling = () => {
    if (!pollTimer) return;
    clearInterval(pollTimer);
    pollTimer = null;
    handlers.onStale?.(false);
  };

  const es = new EventSource(`${base}/runs/${runId}/events`);
  es.onopen = () => stopPolling();
  es.onerror = () => startPolling();
  for (const name of ["iteration_completed", "awaiting_human", "finished"]) {
    es.addEventListener(name, () => refresh());
  }

  refresh(); // initial render before the first event arrives

  return {
    close() {
      closed = true;
      stopPolling();
      es.close();
    },
  };
}
