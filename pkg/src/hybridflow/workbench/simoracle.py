"""Discrete-event list-scheduling simulator: the independent reference for
the continuous-processing experiments.

The engine schedules unit tasks greedily (FIFO among ready tasks, first
worker with enough free cores) and supports arrival times triggered by
another task's start, which models stream elements appearing while their
producer is still running.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field


@dataclass
class _SimTask:
    tid: int
    duration: float
    cores: int = 1
    pin: int | None = None
    after: list[int] = field(default_factory=list)
    after_start: tuple[int, float] | None = None
    earliest: float = 0.0
    start: float | None = None
    end: float | None = None


class ListScheduleSim:
    """Greedy list scheduler over heterogeneous workers."""

    def __init__(self, worker_cores: list[int]) -> None:
        if not worker_cores or any(c < 1 for c in worker_cores):
            raise ValueError("worker_cores must be a non-empty list of positives")
        self.cores = list(worker_cores)
        self.free = list(worker_cores)
        self.tasks: dict[int, _SimTask] = {}
        self._seq = itertools.count(1)

    def add(self, duration: float, cores: int = 1, pin: int | None = None,
            after: list[int] | None = None,
            after_start: tuple[int, float] | None = None,
            earliest: float = 0.0) -> int:
        tid = next(self._seq)
        self.tasks[tid] = _SimTask(
            tid=tid, duration=float(duration), cores=cores, pin=pin,
            after=list(after or []), after_start=after_start, earliest=earliest)
        return tid

    def run(self) -> float:
        """Execute the schedule; returns the makespan."""
        tasks = self.tasks
        remaining_deps = {t.tid: set(t.after) for t in tasks.values()}
        start_waiters: dict[int, list[int]] = {}
        for t in tasks.values():
            if t.after_start is not None:
                start_waiters.setdefault(t.after_start[0], []).append(t.tid)
        # (ready_time, tid) heap of arrival events; FIFO queue of runnable work
        arrivals: list[tuple[float, int]] = []
        pending: list[tuple[float, int]] = []
        released = set()

        def release(tid: int, now: float) -> None:
            if tid in released:
                return
            task = tasks[tid]
            if remaining_deps[tid] or (task.after_start is not None
                                       and tasks[task.after_start[0]].start is None):
                return
            released.add(tid)
            heapq.heappush(arrivals, (max(now, task.earliest), tid))

        completions: list[tuple[float, int, int]] = []  # (time, tid, worker)
        now = 0.0
        for t in tasks.values():
            release(t.tid, 0.0)

        def try_start(now: float) -> None:
            # pending is kept sorted by (ready_time, tid); greedy first-fit
            progress = True
            while progress:
                progress = False
                for idx, (_, tid) in enumerate(pending):
                    task = tasks[tid]
                    workers = ([task.pin] if task.pin is not None
                               else range(len(self.cores)))
                    for w in workers:
                        if self.free[w] >= task.cores:
                            self.free[w] -= task.cores
                            task.start = now
                            task.end = now + task.duration
                            heapq.heappush(completions, (task.end, tid, w))
                            pending.pop(idx)
                            for waiter in start_waiters.get(tid, ()):  # stream arrivals
                                wt = tasks[waiter]
                                wt.earliest = max(wt.earliest,
                                                  task.start + wt.after_start[1])
                                release(waiter, now)
                            progress = True
                            break
                    if progress:
                        break

        makespan = 0.0
        while arrivals or pending or completions:
            next_arrival = arrivals[0][0] if arrivals else float("inf")
            next_completion = completions[0][0] if completions else float("inf")
            if not pending and next_arrival == float("inf") and next_completion == float("inf"):
                raise RuntimeError("deadlock in simulation: tasks never released")
            now = min(next_arrival, next_completion)
            while completions and completions[0][0] <= now:
                _, tid, w = heapq.heappop(completions)
                self.free[w] += tasks[tid].cores
                makespan = max(makespan, tasks[tid].end)
                for other in tasks.values():
                    if tid in remaining_deps[other.tid]:
                        remaining_deps[other.tid].discard(tid)
                        release(other.tid, now)
            while arrivals and arrivals[0][0] <= now:
                ready_time, tid = heapq.heappop(arrivals)
                pending.append((ready_time, tid))
            pending.sort()
            try_start(now)
        return makespan


def uc1_makespan(mode: str, worker_cores: list[int], num_sims: int,
                 elements: int, gen_ms: float, proc_ms: float,
                 merge_ms: float = 0.0, sim_cores: int = 1) -> float:
    """Predicted makespan of the continuous-generation workflow.

    In pure task mode every processing task waits for its simulation to
    finish; in hybrid mode element j of a simulation becomes processable
    (j+1)*gen_ms after the simulation starts. Simulations are pinned to the
    largest worker.
    """
    sim = ListScheduleSim(worker_cores)
    big = max(range(len(worker_cores)), key=lambda i: worker_cores[i])
    for _ in range(num_sims):
        sim_tid = sim.add(elements * gen_ms, cores=sim_cores, pin=big)
        procs = []
        for j in range(elements):
            if mode == "hybrid":
                procs.append(sim.add(proc_ms, after_start=(sim_tid, (j + 1) * gen_ms)))
            else:
                procs.append(sim.add(proc_ms, after=[sim_tid]))
        sim.add(merge_ms, after=procs)
    return sim.run()


def oracle_simulate(worker_cores: list[int], num_sims: int, elements: int,
                    gen_ms: float, proc_ms: float, merge_ms: float = 0.0,
                    sim_cores: int = 1) -> tuple[float, float]:
    """Predicted (pure, hybrid) makespans for one configuration."""
    pure = uc1_makespan("pure", worker_cores, num_sims, elements, gen_ms,
                        proc_ms, merge_ms, sim_cores)
    hybrid = uc1_makespan("hybrid", worker_cores, num_sims, elements, gen_ms,
                          proc_ms, merge_ms, sim_cores)
    return pure, hybrid


def uc2_gain_model(iterations: int, compute_ms: float, exchange_ms: float,
                   init_ms: float, per_task_overhead_ms: float = 0.0) -> float:
    """Closed-form model of the synchronized-vs-streamed iteration exchange.

    The pure variant pays the exchange task plus two scheduling boundaries
    every iteration; the hybrid folds everything into one long task. With
    exchange cost and overheads at zero the gain vanishes.
    """
    o = per_task_overhead_ms
    pure = init_ms + 2 * o + iterations * (compute_ms + exchange_ms + 2 * o)
    hybrid = init_ms + o + iterations * compute_ms
    if pure == 0:
        raise ZeroDivisionError("pure makespan is zero")
    return (pure - hybrid) / pure
