"""In-process data-dependency task runtime with read / write / read-write / commute modes.

Tasks are submitted sequentially; each declares the data handles it touches.
Dependencies are derived at submission from prior accesses to the same
handles (RAW, WAR, WAW).  Consecutive commute accesses to a handle are
mutually unordered but never run at the same time.  ``run`` executes the
pending graph on a pool of worker threads and returns a trace.
"""
import enum
import heapq
import itertools
import os
import threading
import time
from dataclasses import dataclass, field


class Mode(enum.Enum):
    R = "read"
    W = "write"
    RW = "readwrite"
    COMMUTE = "commute"


READ, WRITE, READWRITE, COMMUTE = Mode.R, Mode.W, Mode.RW, Mode.COMMUTE


class RuntimeErrorBase(RuntimeError):
    pass


class UnknownHandle(RuntimeErrorBase, KeyError):
    pass


class DuplicateHandleInTask(RuntimeErrorBase, ValueError):
    pass


class DeadlockDetected(RuntimeErrorBase):
    pass


class CodeletPanicked(RuntimeErrorBase):
    def __init__(self, task_id, name, original):
        super().__init__(f"task {task_id} ({name}) raised {type(original).__name__}: {original}")
        self.task_id = task_id
        self.name = name
        self.original = original


@dataclass(frozen=True)
class DataHandle:
    id: int
    name: str


@dataclass
class TaskDecl:
    codelet: object
    accesses: list
    name: str = ""
    priority: int = None
    args: tuple = ()


@dataclass
class _Task:
    id: int
    decl: TaskDecl
    deps: set = field(default_factory=set)
    succ: list = field(default_factory=list)


@dataclass(frozen=True)
class TraceEvent:
    task_id: int
    name: str
    worker: int
    t_start: float
    t_end: float
    seq_start: int
    seq_end: int


@dataclass
class TaskGraphRun:
    tasks: list                       # (id, name, accesses) in submission order
    edges: list                       # (before, after)
    trace: list                       # TraceEvent, in completion order
    workers: int
    scheduler: str
    wall_time: float

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("task_id,name,worker,t_start,t_end\n")
            for e in sorted(self.trace, key=lambda e: e.seq_start):
                fh.write(f"{e.task_id},{e.name},{e.worker},{e.t_start:.9f},{e.t_end:.9f}\n")

    def check_serializable(self):
        """Edges violated by the trace (empty when the trace is a linear extension)."""
        ev = {e.task_id: e for e in self.trace}
        return [(a, b) for a, b in self.edges if not ev[a].seq_end < ev[b].seq_start]

    def check_exclusive(self):
        """Pairs of overlapping tasks that share a handle with a non-read access."""
        ev = {e.task_id: e for e in self.trace}
        users = {}
        for tid, _, acc in self.tasks:
            for h, m in acc:
                users.setdefault(h, []).append((tid, m))
        bad = []
        for h, lst in users.items():
            spans = sorted((ev[t].seq_start, ev[t].seq_end, t, m) for t, m in lst)
            active = []
            for s0, s1, t, m in spans:
                active = [a for a in active if a[1] > s0]
                for a in active:
                    if m is not Mode.R or a[3] is not Mode.R:
                        bad.append((a[2], t, h))
                active.append((s0, s1, t, m))
        return bad


def default_workers():
    env = os.environ.get("KINDG_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class Runtime:
    """Sequential-submission task runtime.

    >>> rt = Runtime()
    >>> h = rt.register("x")
    >>> out = []
    >>> _ = rt.submit(lambda: out.append(1), [(h, WRITE)])
    >>> _ = rt.submit(lambda: out.append(out[-1] + 1), [(h, READ)])
    >>> _ = rt.run(workers=2)
    >>> out
    [1, 2]
    """

    def __init__(self, deterministic=False):
        self._handles = {}
        self._ids = itertools.count()
        self.deterministic = deterministic
        self._reset()

    def _reset(self):
        self._tasks = []
        self._state = {}

    def deterministic_mode(self, flag):
        if self._tasks:
            raise RuntimeErrorBase("deterministic mode must be set before submitting tasks")
        self.deterministic = bool(flag)

    def register(self, name):
        h = DataHandle(next(self._ids), name)
        self._handles[h.id] = h
        return h

    @property
    def pending(self):
        return len(self._tasks)

    def submit(self, codelet, accesses=(), name="", priority=None, args=()):
        """Enqueue a task; ``codelet`` is called with ``*args`` when it runs."""
        decl = codelet if isinstance(codelet, TaskDecl) else TaskDecl(codelet, list(accesses), name, priority, args)
        seen = set()
        for h, m in decl.accesses:
            if not isinstance(h, DataHandle) or self._handles.get(h.id) is not h:
                raise UnknownHandle(f"handle {h!r} is not registered")
            if h.id in seen:
                raise DuplicateHandleInTask(f"handle {h.name} appears twice in task {decl.name!r}")
            seen.add(h.id)
            if not isinstance(m, Mode):
                raise ValueError(f"bad access mode {m!r}")
        task = _Task(len(self._tasks), decl)
        for h, m in decl.accesses:
            task.deps |= self._derive(h.id, m, task.id)
        task.deps.discard(task.id)
        for d in task.deps:
            self._tasks[d].succ.append(task.id)
        self._tasks.append(task)
        return task.id

    def add_dependency(self, before, after):
        """Explicit extra edge between already submitted tasks."""
        self._tasks[after].deps.add(before)
        self._tasks[before].succ.append(after)

    def _derive(self, hid, mode, tid):
        st = self._state.setdefault(hid, {"last": [], "readers": [], "commute": None})
        if mode is Mode.COMMUTE and not self.deterministic:
            grp = st["commute"]
            if grp is None:
                base = list(st["readers"]) if st["readers"] else list(st["last"])
                grp = {"base": base, "members": []}
                st["commute"] = grp
                st["readers"] = []
            grp["members"].append(tid)
            st["last"] = list(grp["members"])
            return set(grp["base"])
        if mode is Mode.R:
            st["readers"].append(tid)
            st["commute"] = None
            return set(st["last"])
        # write, read-write, or serialized commute
        deps = set(st["readers"]) if st["readers"] else set(st["last"])
        st["last"] = [tid]
        st["readers"] = []
        st["commute"] = None
        return deps

    # --- execution --------------------------------------------------------

    def run(self, workers=None, scheduler="eager"):
        """Execute all pending tasks; returns a TaskGraphRun and clears the queue.

        ``eager`` serves ready tasks first-in first-out by submission index, so a
        single worker replays the sequential program exactly.  ``priority`` takes
        the largest remaining depth (or explicit priority) first.
        """
        workers = default_workers() if workers is None else int(workers)
        if workers < 1:
            raise ValueError("workers must be >= 1")
        if scheduler not in ("eager", "priority"):
            raise ValueError(f"unknown scheduler {scheduler!r}")
        tasks = self._tasks
        self._reset()
        n = len(tasks)
        info = [(t.id, t.decl.name, [(h.id, m) for h, m in t.decl.accesses]) for t in tasks]
        edges = [(d, t.id) for t in tasks for d in sorted(t.deps)]
        if scheduler == "priority":
            depth = self._depth_of(tasks)
            prio = [-(t.decl.priority if t.decl.priority is not None else depth[t.id]) for t in tasks]
        else:
            prio = [0] * n
        commute_of = [[h.id for h, m in t.decl.accesses if m is Mode.COMMUTE] for t in tasks]

        remaining = [len(t.deps) for t in tasks]
        ready = []
        for t in tasks:
            if remaining[t.id] == 0:
                heapq.heappush(ready, (prio[t.id], t.id))
        busy_handles = set()
        trace = []
        seq = itertools.count()
        cond = threading.Condition()
        state = {"done": 0, "running": 0, "error": None}
        t0 = time.perf_counter()

        def pick():
            skipped = []
            chosen = None
            while ready:
                item = heapq.heappop(ready)
                if any(h in busy_handles for h in commute_of[item[1]]):
                    skipped.append(item)
                    continue
                chosen = item[1]
                break
            for item in skipped:
                heapq.heappush(ready, item)
            return chosen

        def worker(wid):
            while True:
                with cond:
                    while True:
                        if state["error"] is not None or state["done"] == n:
                            cond.notify_all()
                            return
                        tid = pick()
                        if tid is not None:
                            break
                        if state["running"] == 0:
                            state["error"] = DeadlockDetected(
                                f"{n - state['done']} tasks can never become ready")
                            cond.notify_all()
                            return
                        cond.wait()
                    busy_handles.update(commute_of[tid])
                    state["running"] += 1
                    s0 = next(seq)
                    ts = time.perf_counter() - t0
                task = tasks[tid]
                err = None
                try:
                    task.decl.codelet(*task.decl.args)
                except BaseException as exc:  # reported with the task id
                    err = CodeletPanicked(tid, task.decl.name, exc)
                with cond:
                    te = time.perf_counter() - t0
                    trace.append(TraceEvent(tid, task.decl.name, wid, ts, te, s0, next(seq)))
                    busy_handles.difference_update(commute_of[tid])
                    state["running"] -= 1
                    if err is not None and state["error"] is None:
                        state["error"] = err
                    state["done"] += 1
                    for s in task.succ:
                        remaining[s] -= 1
                        if remaining[s] == 0:
                            heapq.heappush(ready, (prio[s], s))
                    cond.notify_all()

        if n:
            if workers == 1:
                worker(0)
            else:
                threads = [threading.Thread(target=worker, args=(w,), daemon=True) for w in range(workers)]
                for th in threads:
                    th.start()
                for th in threads:
                    th.join()
        wall = time.perf_counter() - t0
        if state["error"] is not None:
            raise state["error"]
        return TaskGraphRun(info, edges, trace, workers, scheduler, wall)

    @staticmethod
    def _depth_of(tasks):
        depth = [0] * len(tasks)
        for t in reversed(tasks):
            if t.succ:
                depth[t.id] = 1 + max(depth[s] for s in t.succ)
        return depth
