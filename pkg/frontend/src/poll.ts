/** Fixed-interval polling that never overlaps itself: the next tick is
 * scheduled only after the current one settles, so a slow service
 * stretches the period instead of stacking requests. */

export interface Poller {
  stop(): void;
}

export function startPolling(
  tick: () => Promise<void>,
  intervalMs: number,
  schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> = setTimeout,
  cancel: (id: ReturnType<typeof setTimeout>) => void = clearTimeout,
): Poller {
  let stopped = false;
  let timer: ReturnType<typeof setTimeout> | undefined;

  const loop = async () => {
    if (stopped) return;
    try {
      await tick();
    } catch {
      // the view renders the failure; polling itself keeps going
    }
    if (!stopped) {
      timer = schedule(loop, intervalMs);
    }
  };
  void loop();

  return {
    stop() {
      stopped = true;
      if (timer !== undefined) cancel(timer);
    },
  };
}
