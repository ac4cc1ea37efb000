import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepshallow.netcore import ArchitectureSpec, objective, param_count, unflatten
from deepshallow.probgen import (ProblemFormatError, build_size_class, generate_for_size_class,
                                 generate_problem, init_weights, load_problem,
                                 parse_problem_name, save_problem)

TABLE1 = {
    "A": ((100, 50, 80), [(1, 20, 3070), (3, 16, 3010), (5, 14, 3004)], 4000),
    "B": ((300, 150, 240), [(1, 60, 27210), (3, 49, 27149), (5, 43, 27111)], 36000),
    "C": ((1000, 500, 800), [(1, 200, 300700), (3, 164, 300784), (5, 144, 300164)], 400000),
}


@pytest.mark.parametrize("name", "ABC")
def test_size_classes_match_table(name):
    (n_in, n_out, n_data), variants, constraints = TABLE1[name]
    s = build_size_class(name)
    assert (s.input_dim, s.output_dim, s.data_size) == (n_in, n_out, n_data)
    assert [(d, w) for d, w, _ in variants] == list(s.variants)
    assert s.constraint_count == constraints
    for depth, _, params in variants:
        count = param_count(s.arch(depth))
        assert count == params
        assert count < constraints


@pytest.mark.parametrize("name", "ABC")
def test_paired_variants_have_close_parameter_counts(name):
    s = build_size_class(name)
    counts = [param_count(a) for a in s.archs()]
    for c in counts[1:]:
        assert abs(c - counts[0]) / counts[0] < 0.03


def test_unknown_size_class():
    with pytest.raises(ValueError):
        build_size_class("D")


def test_parse_problem_name():
    s, depth = parse_problem_name("B_3")
    assert s.name == "B" and depth == 3
    assert parse_problem_name("a5")[1] == 5


def test_init_weights_bounds_fan_in_three():
    arch = ArchitectureSpec(3, 1, 0, 1, saturation_factor=1.0)
    w = init_weights(arch, 0)
    assert np.all(np.abs(w) < 0.5)


@given(st.integers(0, 2**63 - 1), st.floats(0.1, 5.0))
@settings(max_examples=30)
def test_init_weights_strictly_inside_interval(seed, wf):
    arch = ArchitectureSpec(6, 3, 2, 4, saturation_factor=wf)
    w = init_weights(arch, seed)
    for (W, b), (fan_in, _) in zip(unflatten(w, arch), arch.layer_shapes):
        bound = wf / np.sqrt(fan_in + 1)
        assert np.all(np.abs(W) < bound) and np.all(np.abs(b) < bound)


@pytest.mark.parametrize("fan_in", [3, 20, 99])
def test_init_weights_standard_deviation(fan_in):
    # 1e5 draws in a single layer with fan_out chosen to give >= 1e5 entries
    fan_out = int(np.ceil(1e5 / (fan_in + 1)))
    arch = ArchitectureSpec(fan_in, fan_out, 0, 1, saturation_factor=1.0)
    w = init_weights(arch, 42)
    expected = 1.0 / (np.sqrt(3.0) * np.sqrt(fan_in + 1))
    assert abs(w.std() - expected) / expected < 0.02


def test_generate_problem_shapes_size_b():
    s = build_size_class("B")
    p = generate_for_size_class(s, 1, seed=0)
    assert p.dataset.inputs.shape == (240, 300)
    assert p.dataset.targets.shape == (240, 150)
    assert p.dataset.constraint_count == 36000


@pytest.mark.parametrize("dist", ["standard_normal", "uniform_pm1"])
def test_generated_problem_has_zero_minimum(dist):
    arch = build_size_class("A").arch(5)
    p = generate_problem(arch, 80, dist, 17)
    assert objective(arch, p.generating_params, p.dataset).objective <= 1e-20
    if dist == "uniform_pm1":
        assert np.all(np.abs(p.dataset.inputs) <= 1.0)


def test_generation_is_deterministic_per_seed():
    arch = build_size_class("A").arch(3)
    a = generate_problem(arch, 80, rng_seed=4)
    b = generate_problem(arch, 80, rng_seed=4)
    c = generate_problem(arch, 80, rng_seed=5)
    assert a.content_hash() == b.content_hash()
    assert a.generating_params.tobytes() == b.generating_params.tobytes()
    assert not np.array_equal(a.generating_params, c.generating_params)


def test_unknown_input_distribution():
    with pytest.raises(ValueError):
        generate_problem(ArchitectureSpec(2, 1, 1, 2), 3, "cauchy", 0)


def test_problem_file_round_trip(tmp_path):
    p = generate_for_size_class(build_size_class("A"), 3, seed=8, saturation_factor=2.0,
                                input_distribution="uniform_pm1")
    path = save_problem(p, tmp_path / "prob")
    assert path.suffix == ".npz"
    q = load_problem(path)
    assert q.arch == p.arch and q.seed == 8 and q.input_distribution == "uniform_pm1"
    assert q.content_hash() == p.content_hash()


def test_problem_file_without_arrays(tmp_path):
    p = generate_for_size_class(build_size_class("A"), 1, seed=3)
    path = save_problem(p, tmp_path / "prob", arrays=False)
    meta = json.loads(path.read_text())
    assert meta["has_arrays"] is False and meta["seed"] == 3
    assert load_problem(path).content_hash() == p.content_hash()


def test_problem_file_version_check(tmp_path):
    p = generate_for_size_class(build_size_class("A"), 1, seed=3)
    path = save_problem(p, tmp_path / "prob", arrays=False)
    meta = json.loads(path.read_text())
    meta["format_version"] = 99
    path.write_text(json.dumps(meta))
    with pytest.raises(ProblemFormatError):
        load_problem(path)
