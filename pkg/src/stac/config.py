"""Run configuration: INI-style sections, one per module.

    [run]    algorithm, signals, seed, out, checkpoint_every
    [game]   name plus the fields of the chosen game spec
    [train]  TrainConfig fields

Every field has a default, so an empty file is a valid coordination run.
Tuples are written comma separated (``policy_hidden = 128, 128, 128``).
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from stac.efg import GameError
from stac.games import CoordinationGameSpec, LeducSpec, build_coordination, build_leduc
from stac.train.loop import TrainConfig

ALGORITHMS = ("stac", "masac-baseline", "random")
GAMES = ("coordination", "leduc")
LEDUC_HIDDEN = (128, 128, 128)


class ConfigError(ValueError):
    """Bad configuration; `line` points into the source text when known."""

    def __init__(self, msg: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source or line:
            where = f"{source or '<config>'}" + (f":{line}" if line else "") + ": "
        super().__init__(where + msg)


@dataclass
class RunSection:
    algorithm: str = "stac"
    signals: int = 2
    seed: int = 0
    out: str = "runs/default"
    checkpoint_every: int = 10  # evaluations between checkpoints


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    game: str = "coordination"
    coordination: CoordinationGameSpec = field(default_factory=CoordinationGameSpec)
    leduc: LeducSpec = field(default_factory=LeducSpec)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def n_signals(self) -> int:
        return 1 if self.run.algorithm == "masac-baseline" else self.run.signals

    def game_spec(self):
        return self.coordination if self.game == "coordination" else self.leduc

    def build_game(self):
        if self.game == "coordination":
            return build_coordination(self.coordination)
        return build_leduc(self.leduc)

    def validate(self) -> None:
        if self.run.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.run.algorithm!r}")
        if self.game not in GAMES:
            raise ConfigError(f"game must be one of {GAMES}, got {self.game!r}")
        if self.run.signals < 1:
            raise ConfigError(f"signals must be >= 1, got {self.run.signals}")
        if self.run.algorithm == "masac-baseline" and self.run.signals != 1:
            raise ConfigError("masac-baseline runs without signals; set signals = 1")
        if self.run.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        try:
            self.train.validate(self.n_signals)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        try:
            self.build_game()
        except (ValueError, GameError) as e:
            err = ConfigError(f"invalid {self.game} spec: {e}")
            err.section = "game"
            raise err from None


# -- text format --------------------------------------------------------------------


def _fmt(v: Any) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _sections(cfg: RunConfig) -> dict[str, Any]:
    game = {"name": cfg.game}
    spec = cfg.game_spec()
    game.update({f.name: getattr(spec, f.name) for f in fields(spec)})
    return {
        "run": {f.name: getattr(cfg.run, f.name) for f in fields(cfg.run)},
        "game": game,
        "train": {f.name: getattr(cfg.train, f.name) for f in fields(cfg.train)},
    }


def dumps(cfg: RunConfig) -> str:
    out = []
    for sec, vals in _sections(cfg).items():
        out.append(f"[{sec}]")
        out.extend(f"{k} = {_fmt(v)}" for k, v in vals.items())
        out.append("")
    return "\n".join(out)


def save(cfg: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps(cfg))
    return path


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines, sec = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            sec = m.group(1).strip()
            lines.setdefault((sec, ""), i)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and sec is not None:
            lines[(sec, m.group(1).strip().lower())] = i
    return lines


def _parse_value(raw: str, default: Any, annot: str) -> Any:
    s = raw.strip()
    if "tuple" in annot:
        if not s:
            return ()
        conv = float if "float" in annot else int
        return tuple(conv(x) for x in s.split(","))
    if s.lower() == "none" and "None" in annot:
        return None
    if isinstance(default, bool) or annot == "bool":
        if s.lower() in ("1", "true", "yes", "on"):
            return True
        if s.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {s!r}")
    if "int" in annot and "float" not in annot:
        return int(s)
    if "float" in annot:
        return float(s)
    return s


def _fill(obj, section: dict[str, str], sec: str, lines, source, skip=()) -> Any:
    known = {f.name: f for f in fields(obj)}
    updates = {}
    for k, raw in section.items():
        if k in skip:
            continue
        f = known.get(k)
        if f is None:
            raise ConfigError(f"unknown key {k!r} in [{sec}]", lines.get((sec, k)), source)
        try:
            updates[k] = _parse_value(raw, getattr(obj, k), str(f.type))
        except ValueError as e:
            raise ConfigError(f"bad value for {k}: {e}", lines.get((sec, k)), source) from None
    return dataclasses.replace(obj, **updates)


def loads(text: str, source: str | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as e:
        raise ConfigError(e.message.splitlines()[0] if hasattr(e, "message") else str(e),
                          getattr(e, "lineno", None), source) from None
    lines = _key_lines(text)
    for sec in parser.sections():
        if sec not in ("run", "game", "train"):
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, "")), source)
    cfg = RunConfig()
    if parser.has_section("run"):
        cfg.run = _fill(cfg.run, dict(parser["run"]), "run", lines, source)
    if parser.has_section("game"):
        g = dict(parser["game"])
        cfg.game = g.get("name", cfg.game).strip()
        if cfg.game not in GAMES:
            raise ConfigError(f"game must be one of {GAMES}, got {cfg.game!r}",
                              lines.get(("game", "name")), source)
        if cfg.game == "coordination":
            cfg.coordination = _fill(cfg.coordination, g, "game", lines, source, skip=("name",))
        else:
            cfg.leduc = _fill(cfg.leduc, g, "game", lines, source, skip=("name",))
    train = dict(parser["train"]) if parser.has_section("train") else {}
    if cfg.game == "leduc":
        # the larger game gets the deeper networks unless told otherwise
        cfg.train = dataclasses.replace(cfg.train, policy_hidden=LEDUC_HIDDEN, critic_hidden=LEDUC_HIDDEN)
    cfg.train = _fill(cfg.train, train, "train", lines, source)
    if cfg.run.algorithm == "masac-baseline" and not (parser.has_section("run")
                                                      and "signals" in parser["run"]):
        cfg.run.signals = 1
    try:
        cfg.validate()
    except ConfigError as e:
        key = _guess_key(str(e))
        line = next((v for (s, k), v in lines.items() if k == key), None) if key else None
        if line is None and getattr(e, "section", None):
            line = lines.get((e.section, ""))
        raise ConfigError(str(e), line, source) from None
    return cfg


def _guess_key(msg: str) -> str | None:
    m = re.match(r"^(\w+)", msg)
    return m.group(1) if m else None


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", None, str(path)) from None
    return loads(text, str(path))
