import re
from typing import Tuple
import click  # type: ignore


def validate_override(ctx, param, values) -> Tuple[str, ...]:
    for value in values:
        if not re.match(r"^[A-Za-z_][\w.]*=.*$", value):
            raise click.BadParameter(f"'{value}' is not of the form key=value (e.g. bilevel.inner_steps=10).")
    return tuple(values)


def validate_bounds(ctx, param, value) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    try:
        numbers = [float(part) for part in value.split(",")]
    except ValueError:
        raise click.BadParameter("Bounds must be four numbers: x1min,x1max,x2min,x2max.")
    if len(numbers) != 4 or numbers[1] <= numbers[0] or numbers[3] <= numbers[2]:
        raise click.BadParameter("Bounds must be four numbers with x1min < x1max and x2min < x2max.")
    return (numbers[0], numbers[1]), (numbers[2], numbers[3])


def validate_resolution(ctx, param, value) -> Tuple[int, int]:
    parts = value.lower().split("x")
    try:
        sizes = [int(part) for part in parts]
    except ValueError:
        raise click.BadParameter("Resolution must be an integer or RxC, e.g. 100 or 100x80.")
    if len(sizes) == 1:
        sizes = sizes * 2
    if len(sizes) != 2 or min(sizes) < 1:
        raise click.BadParameter("Resolution must be positive.")
    return sizes[0], sizes[1]
