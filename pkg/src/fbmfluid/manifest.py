"""Run manifests: the complete, replayable configuration of one command."""
import copy
import json
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .fbm import TimeGrid
from .galerkin import PhysParams
from .hurst import HurstParam
from .noise import ModeSpectrum, NoiseAssumption

FORMAT = "fbmfluid-manifest/1"
COMMANDS = ("gen", "convolve", "solve", "pullback", "check-bounds")

# every parameter a command reads, with its default
COMMAND_DEFAULTS = {
    "gen": {"method": "exact"},
    "convolve": {"method": "exact", "stats_replicas": 0},
    "solve": {
        "solver": "evolve",  # evolve | picard | both
        "terms": ["B", "N"],
        "u0_norm": 1.0,
        "u0_decay": 1.5,
        "grid_M": None,
        "max_iter": 60,
        "tol": 1e-10,
        "max_contraction": 0.5,
        "initial_window": None,
    },
    "pullback": {
        "t0_schedule": [-1.0, -2.0, -3.0, -4.0, -6.0],
        "initial_norms": [0.5, 2.0, 5.0],
        "u0_decay": 1.5,
        "terms": ["B", "N"],
        "C1": None,
        "grid_M": None,
    },
    "check-bounds": {
        "times": [0.1, 1.0, 10.0],
        "convolution_dt": 0.1,
        "sigma": 3.0,
        "lattice_terms": 2000,
    },
}


def _check_keys(d, allowed, where):
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigurationError(f"unknown key(s) {sorted(extra)} in {where}")


@dataclass
class RunManifest:
    hurst: float = 0.75
    assumption: dict = field(default_factory=lambda: {"variant": "A4", "q_exponent": 0.0,
                                                      "phi_exponent": 0.0, "tail_exponent": None})
    truncation: int = 8
    grid: dict = field(default_factory=lambda: {"t0": 0.0, "dt": 1.0 / 16, "n_steps": 16})
    phys: dict = field(default_factory=lambda: {"mu0": 0.5, "epsilon": 1.0, "alpha": 0.5})
    seeds: dict = field(default_factory=lambda: {"master": 0, "replicas": 1})
    command: dict = field(default_factory=lambda: {"name": "gen", "params": {}})
    outputs: dict = field(default_factory=lambda: {"dir": "out"})
    threads: int = 1
    version: str = FORMAT

    def __post_init__(self):
        if self.version != FORMAT:
            raise ConfigurationError(f"unsupported manifest version {self.version!r}")
        name = self.command.get("name")
        if name not in COMMANDS:
            raise ConfigurationError(f"command must be one of {COMMANDS}, got {name!r}")
        params = dict(COMMAND_DEFAULTS[name])
        given = self.command.get("params") or {}
        _check_keys(given, params, f"command.params for {name}")
        params.update(given)
        self.command = {"name": name, "params": params}
        a = {"variant": "A4", "q_exponent": 0.0, "phi_exponent": 0.0, "tail_exponent": None}
        _check_keys(self.assumption, a, "assumption")
        a.update(self.assumption)
        self.assumption = a
        self.truncation = int(self.truncation)
        self.threads = int(self.threads)
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")
        s = {"master": 0, "replicas": 1}
        _check_keys(self.seeds, s, "seeds")
        s.update(self.seeds)
        s["master"], s["replicas"] = int(s["master"]), int(s["replicas"])
        if not 0 <= s["master"] < 2 ** 64:
            raise ConfigurationError("master seed must be an unsigned 64-bit integer")
        if s["replicas"] < 1:
            raise ConfigurationError("replicas must be at least 1")
        self.seeds = s
        _check_keys(self.grid, ("t0", "dt", "n_steps"), "grid")
        _check_keys(self.phys, ("mu0", "epsilon", "alpha"), "phys")

    # typed views; each validates on access
    def hurst_param(self):
        return HurstParam(float(self.hurst))

    def time_grid(self):
        g = self.grid
        return TimeGrid(float(g["t0"]), float(g["dt"]), int(g["n_steps"]))

    def phys_params(self):
        p = self.phys
        if float(p["alpha"]) == 0.0:
            return PhysParams.linear_limit(float(p["mu0"]), float(p["epsilon"]))
        return PhysParams(float(p["mu0"]), float(p["epsilon"]), float(p["alpha"]))

    def noise_assumption(self):
        a = self.assumption
        qe, pe = float(a["q_exponent"]), float(a["phi_exponent"])
        q = None if qe == 0 else (lambda i: i ** -qe)
        phi = None if pe == 0 else (lambda i: i ** -pe)
        sp = ModeSpectrum.square(self.truncation, q, phi)
        return NoiseAssumption(a["variant"], sp, a["tail_exponent"])

    @property
    def params(self):
        return self.command["params"]

    def to_dict(self):
        return copy.deepcopy({
            "version": self.version, "hurst": self.hurst, "assumption": self.assumption,
            "truncation": self.truncation, "grid": self.grid, "phys": self.phys,
            "seeds": self.seeds, "command": self.command, "outputs": self.outputs,
            "threads": self.threads,
        })

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigurationError("manifest must be a JSON object")
        _check_keys(d, ("version", "hurst", "assumption", "truncation", "grid", "phys",
                        "seeds", "command", "outputs", "threads"), "manifest")
        return cls(**copy.deepcopy(d))

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"manifest is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.loads(fh.read())
        except OSError as exc:
            raise ConfigurationError(f"cannot read manifest {path!r}: {exc.strerror}") from exc
