from stac.games.coordination import (
    CoordinationGame,
    CoordinationGameSpec,
    build_coordination,
)
from stac.games.leduc import LeducGame, LeducSpec, build_leduc

__all__ = [
    "CoordinationGame",
    "CoordinationGameSpec",
    "LeducGame",
    "LeducSpec",
    "build_coordination",
    "build_leduc",
]
