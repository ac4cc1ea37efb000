"""Random network parametrizations and training sets with a known zero minimum.

A problem is built by drawing generating weights ``w0`` for an architecture,
drawing random inputs ``U`` and setting the targets to the network's own
outputs ``Y = f(U, w0)``. The mean squared error at ``w0`` is then zero.

Randomness uses numpy's PCG64 generator. A problem seed is expanded with
``numpy.random.SeedSequence(seed).spawn(2)``: the first child stream draws the
weights, the second draws the inputs. Seeds for the fifteen parametrizations
of an experiment are ``master_seed + index``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from .netcore import (DEFAULT_SATURATION, ArchitectureSpec, Dataset, ShapeError, forward,
                      param_count)

PROBLEM_FORMAT_VERSION = 1
INPUT_DISTRIBUTIONS = ("standard_normal", "uniform_pm1")

SeedLike = Union[int, Tuple[int, ...], List[int]]


@dataclass(frozen=True)
class SizeClassSpec:
    name: str
    input_dim: int
    output_dim: int
    data_size: int
    variants: Tuple[Tuple[int, int], ...]

    @property
    def constraint_count(self) -> int:
        return self.data_size * self.output_dim

    def arch(self, hidden_count: int, saturation_factor: float = DEFAULT_SATURATION) -> ArchitectureSpec:
        """Architecture of the variant with ``hidden_count`` hidden layers."""
        for depth, width in self.variants:
            if depth == hidden_count:
                return ArchitectureSpec(self.input_dim, self.output_dim, depth, width,
                                        saturation_factor)
        raise KeyError(f"size class {self.name} has no variant with {hidden_count} hidden layers")

    def archs(self, saturation_factor: float = DEFAULT_SATURATION) -> List[ArchitectureSpec]:
        return [self.arch(depth, saturation_factor) for depth, _ in self.variants]


_SIZE_CLASSES = {
    "A": SizeClassSpec("A", 100, 50, 80, ((1, 20), (3, 16), (5, 14))),
    "B": SizeClassSpec("B", 300, 150, 240, ((1, 60), (3, 49), (5, 43))),
    "C": SizeClassSpec("C", 1000, 500, 800, ((1, 200), (3, 164), (5, 144))),
}


def build_size_class(name: str) -> SizeClassSpec:
    try:
        return _SIZE_CLASSES[name.upper()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown size class {name!r}; expected one of A, B, C") from None


def parse_problem_name(name: str) -> Tuple[SizeClassSpec, int]:
    """``"B_3"`` or ``"B3"`` -> (size class B, 3 hidden layers)."""
    cleaned = name.replace("_", "")
    if len(cleaned) < 2 or not cleaned[1:].isdigit():
        raise ValueError(f"cannot parse problem name {name!r}")
    return build_size_class(cleaned[0]), int(cleaned[1:])


def _rng(seed: SeedLike) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def init_weights(arch: ArchitectureSpec, rng_seed: SeedLike) -> np.ndarray:
    """Uniform random parameters in the flat layout of ``arch``.

    Every weight and bias of a layer with fan-in ``n`` is drawn from
    ``(-w_f / sqrt(n + 1), w_f / sqrt(n + 1))`` with ``w_f`` the
    architecture's saturation factor.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else _rng(rng_seed)
    out = np.empty(param_count(arch))
    offset = 0
    for fan_in, fan_out in arch.layer_shapes:
        size = (fan_in + 1) * fan_out
        bound = arch.saturation_factor / np.sqrt(fan_in + 1)
        u = rng.random(size)
        # random() is [0, 1); redraw exact zeros so the interval stays open
        while True:
            zeros = u == 0.0
            if not zeros.any():
                break
            u[zeros] = rng.random(int(zeros.sum()))
        out[offset:offset + size] = bound * (2.0 * u - 1.0)
        offset += size
    return out


def draw_inputs(rng: np.random.Generator, n_samples: int, input_dim: int,
                distribution: str) -> np.ndarray:
    if distribution == "standard_normal":
        return rng.standard_normal((n_samples, input_dim))
    if distribution == "uniform_pm1":
        return rng.uniform(-1.0, 1.0, (n_samples, input_dim))
    raise ValueError(f"unknown input distribution {distribution!r}; "
                     f"expected one of {INPUT_DISTRIBUTIONS}")


@dataclass
class Problem:
    arch: ArchitectureSpec
    dataset: Dataset
    generating_params: np.ndarray
    seed: int
    input_distribution: str = "standard_normal"

    def metadata(self) -> dict:
        return {
            "format_version": PROBLEM_FORMAT_VERSION,
            "arch": arch_to_dict(self.arch),
            "n_samples": self.dataset.n_samples,
            "seed": self.seed,
            "saturation_factor": self.arch.saturation_factor,
            "input_distribution": self.input_distribution,
        }

    def content_hash(self) -> str:
        """SHA-256 over the metadata and the raw U, Y and w0 bytes."""
        h = hashlib.sha256(json.dumps(self.metadata(), sort_keys=True).encode())
        for a in (self.dataset.inputs, self.dataset.targets, self.generating_params):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()


def generate_problem(arch: ArchitectureSpec, n_samples: int,
                     input_distribution: str = "standard_normal",
                     rng_seed: int = 0) -> Problem:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    weight_seq, input_seq = np.random.SeedSequence(rng_seed).spawn(2)
    w0 = init_weights(arch, np.random.Generator(np.random.PCG64(weight_seq)))
    U = draw_inputs(np.random.Generator(np.random.PCG64(input_seq)), n_samples,
                    arch.input_dim, input_distribution)
    Y = forward(arch, w0, U)
    return Problem(arch, Dataset(U, Y), w0, int(rng_seed), input_distribution)


def generate_for_size_class(size: SizeClassSpec, hidden_count: int, seed: int,
                            saturation_factor: float = DEFAULT_SATURATION,
                            input_distribution: str = "standard_normal") -> Problem:
    return generate_problem(size.arch(hidden_count, saturation_factor), size.data_size,
                            input_distribution, seed)


def arch_to_dict(arch: ArchitectureSpec) -> dict:
    return {
        "input_dim": arch.input_dim,
        "output_dim": arch.output_dim,
        "hidden_count": arch.hidden_count,
        "hidden_width": arch.hidden_width,
        "saturation_factor": arch.saturation_factor,
        "output_activation": arch.output_activation,
    }


def arch_from_dict(d: dict) -> ArchitectureSpec:
    return ArchitectureSpec(int(d["input_dim"]), int(d["output_dim"]), int(d["hidden_count"]),
                            int(d["hidden_width"]), float(d["saturation_factor"]),
                            d.get("output_activation", "linear"))


class ProblemFormatError(ValueError):
    pass


def save_problem(problem: Problem, path, arrays: bool = True) -> Path:
    """Write a problem file.

    With ``arrays=True`` the file is an ``.npz`` archive holding ``meta`` (a JSON
    string) and the float64 arrays ``inputs``, ``targets`` and
    ``generating_params``. With ``arrays=False`` only the JSON metadata is written
    (as ``.json``); the arrays are regenerated from the seed on load.
    """
    path = Path(path)
    meta = problem.metadata()
    meta["has_arrays"] = arrays
    meta["content_sha256"] = problem.content_hash()
    if arrays:
        if path.suffix != ".npz":
            path = path.with_suffix(".npz")
        np.savez(path, meta=np.array(json.dumps(meta, sort_keys=True)),
                 inputs=problem.dataset.inputs, targets=problem.dataset.targets,
                 generating_params=problem.generating_params)
    else:
        if path.suffix != ".json":
            path = path.with_suffix(".json")
        path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path


def _check_meta(meta: dict) -> None:
    version = meta.get("format_version")
    if version != PROBLEM_FORMAT_VERSION:
        raise ProblemFormatError(
            f"problem file has format_version {version!r}, this build reads "
            f"{PROBLEM_FORMAT_VERSION}")


def load_problem(path) -> Problem:
    path = Path(path)
    if path.suffix == ".json":
        meta = json.loads(path.read_text())
        _check_meta(meta)
        arch = arch_from_dict(meta["arch"])
        return generate_problem(arch, meta["n_samples"], meta["input_distribution"], meta["seed"])
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        _check_meta(meta)
        arch = arch_from_dict(meta["arch"])
        dataset = Dataset(z["inputs"].copy(), z["targets"].copy())
        w0 = z["generating_params"].copy()
    if dataset.inputs.shape[1] != arch.input_dim or dataset.targets.shape[1] != arch.output_dim:
        raise ShapeError(f"stored arrays {dataset.inputs.shape}/{dataset.targets.shape} "
                         f"do not match architecture {arch.label()}")
    return Problem(arch, dataset, w0, int(meta["seed"]), meta["input_distribution"])
