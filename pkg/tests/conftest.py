import hashlib
from pathlib import Path

import pytest

import antijam
from antijam.agents import AgentBundle, train
from antijam.agents.trainer import VARIANTS

CACHE = Path(__file__).resolve().parent.parent / ".acceptance_cache"
RESULTS: dict[int, str] = {}


def source_digest() -> str:
    h = hashlib.sha256()
    root = Path(antijam.__file__).parent
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


class BundleCache:
    """Trained bundles keyed by source digest, config, algorithm, seed and variant.

    Training the acceptance bundles takes over an hour on one core, so
    finished bundles are kept on disk. Any change to the package source
    or scenario changes the key and forces a retrain.
    """

    def __init__(self, root: Path):
        self.root = root
        self.src = source_digest()
        self.mem = {}

    def get(self, algo, cfg, seed, variant="full", episodes=None):
        key = (algo, cfg.digest(), seed, variant, episodes)
        if key in self.mem:
            return self.mem[key]
        tag = f"{self.src}_{cfg.digest()[:12]}_{algo}_{variant}_{seed}_{episodes or 'all'}"
        path = self.root / tag
        try:
            bundle = AgentBundle.load(path)
        except FileNotFoundError:
            bundle, _ = train(algo, cfg, seed, episodes, VARIANTS[variant])
            bundle.save(path)
        self.mem[key] = bundle
        return bundle


@pytest.fixture(scope="session")
def bundles():
    return BundleCache(CACHE)


@pytest.fixture
def record():
    def _record(n: int, ok: bool, detail: str):
        RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return _record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
