"""Shallow vs deep MLP fitting benchmark on problems with a known zero minimum."""
from .netcore import ArchitectureSpec, Dataset, activation, forward, gradient, objective, param_count
from .probgen import Problem, build_size_class, generate_problem, init_weights

__all__ = [
    "ArchitectureSpec", "Dataset", "Problem", "activation", "build_size_class", "forward",
    "generate_problem", "gradient", "init_weights", "objective", "param_count",
]
