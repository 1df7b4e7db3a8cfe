"""Shared builders for runtime property checks."""
import numpy as np

from kindg.runtime import COMMUTE, READ, READWRITE, WRITE, Runtime

MODES = (READ, WRITE, READWRITE, COMMUTE)


def random_graph_run(seed, n_tasks=None, n_handles=None, workers=None, scheduler=None, deterministic=False):
    """Submit a random task set, run it, and return (run, submitted accesses, observed logs)."""
    rng = np.random.default_rng(seed)
    n_tasks = int(rng.integers(1, 40)) if n_tasks is None else n_tasks
    n_handles = int(rng.integers(1, 6)) if n_handles is None else n_handles
    workers = int(rng.integers(1, 5)) if workers is None else workers
    scheduler = ("eager", "priority")[int(rng.integers(2))] if scheduler is None else scheduler
    rt = Runtime(deterministic)
    handles = [rt.register(f"h{k}") for k in range(n_handles)]
    logs = {h.id: [] for h in handles}
    seen = {}
    accesses = []

    def body(tid, acc):
        for h, m in acc:
            if m is READ:
                seen[tid, h.id] = tuple(logs[h.id])
            else:
                logs[h.id].append(tid)

    for tid in range(n_tasks):
        k = int(rng.integers(1, min(3, n_handles) + 1))
        hs = rng.choice(n_handles, size=k, replace=False)
        acc = [(handles[h], MODES[int(rng.integers(4))]) for h in hs]
        accesses.append([(h.id, m) for h, m in acc])
        rt.submit(body, acc, name=f"t{tid}", args=(tid, acc))
    run = rt.run(workers=workers, scheduler=scheduler)
    return run, accesses, logs, seen


def ordering_violations(run, accesses):
    """Conflicting pairs (not both read, not both commute) that ran against submission order."""
    ev = {e.task_id: e for e in run.trace}
    by_handle = {}
    for tid, acc in enumerate(accesses):
        for h, m in acc:
            by_handle.setdefault(h, []).append((tid, m))
    bad = []
    for h, lst in by_handle.items():
        for a in range(len(lst)):
            for b in range(a + 1, len(lst)):
                (ta, ma), (tb, mb) = lst[a], lst[b]
                if (ma is READ and mb is READ) or (ma is COMMUTE and mb is COMMUTE):
                    continue
                if not ev[ta].seq_end < ev[tb].seq_start:
                    bad.append((ta, tb, h))
    return bad


def read_violations(accesses, logs, seen):
    """Reads that saw a writer set different from the sequential program's."""
    bad = []
    for tid, acc in enumerate(accesses):
        for h, m in acc:
            if m is not READ:
                continue
            expect = {t for t, a in enumerate(accesses[:tid]) for hh, mm in a if hh == h and mm is not READ}
            if set(seen[tid, h]) != expect:
                bad.append((tid, h))
    return bad


def check_all(seed, **kw):
    run, accesses, logs, seen = random_graph_run(seed, **kw)
    return (run.check_serializable() + run.check_exclusive() + ordering_violations(run, accesses)
            + read_violations(accesses, logs, seen))


ACCEPTANCE = []


def report(number, ok, detail, status=None):
    """Record and print one acceptance line; ``status`` overrides PASS/FAIL (e.g. RECORDED)."""
    line = f"criterion {number:>2}: {status or ('PASS' if ok else 'FAIL')}  {detail}"
    ACCEPTANCE.append(line)
    print("\n" + line, flush=True)
    return ok
