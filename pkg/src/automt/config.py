"""Run configuration: flat key=value file, endpoint table, thresholds."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backends import BackendEndpoint, BackendKind
from .errors import ParseError
from .extraction import DEFAULT_ACCEPT_SCORE, ParserProfile
from .followup import DEFAULT_MIN_SPEED_MPS, DEFAULT_STATIONARY_EPS_MPS, DEFAULT_TOP_K
from .ontology import OntologyTaxonomy, load_builtin_taxonomy, load_taxonomy
from .oracle import DEFAULT_BAND_K
from .relations import DEFAULT_SYSTEM_NAME

_SCALARS = {"true": True, "false": False}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw and raw[0] in "\"'" and raw[-1] == raw[0] and len(raw) >= 2:
        return raw[1:-1]
    if raw.lower() in _SCALARS:
        return _SCALARS[raw.lower()]
    if re.fullmatch(r"[+-]?\d+", raw):
        return int(raw)
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_config_text(text: str) -> dict:
    """Flat `key = value` document; '#' lines are comments."""
    values: dict = {}
    for line_number, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError(f"config line {line_number}: expected key = value")
        key, _, raw = stripped.partition("=")
        values[key.strip()] = _parse_value(raw)
    return values


DEFAULT_BACKEND_URLS = {
    BackendKind.CHAT: "mock:pipeline",
    BackendKind.VISION: "mock:pipeline",
    BackendKind.EMBED: "mock:default?dim=64",
    BackendKind.EDIT: "mock:default",
    BackendKind.VIDEO: "mock:default",
    BackendKind.PREDICT: "mock:default",
}

DEFAULT_PARSER_URLS = {
    "alpha": "mock:pipeline?profile=alpha",
    "beta": "mock:pipeline?profile=beta",
    "gamma": "mock:pipeline?profile=gamma",
}

DEFAULT_ADS_URLS = {
    "pilotnet": "mock:default?ads=pilotnet",
    "epoch": "mock:default?ads=epoch",
    "resnet101": "mock:default?ads=resnet101",
}


@dataclass(frozen=True)
class RunConfig:
    region: str = "DE"
    taxonomy_path: str = "builtin:DE"
    seed: int = 0
    parallelism: int = 1
    system_name: str = DEFAULT_SYSTEM_NAME
    backend_urls: dict = field(default_factory=lambda: dict(DEFAULT_BACKEND_URLS))
    parser_urls: dict = field(default_factory=lambda: dict(DEFAULT_PARSER_URLS))
    validator_url: str = "mock:pipeline?role=validator"
    ads_urls: dict = field(default_factory=lambda: dict(DEFAULT_ADS_URLS))
    accept_score: float = DEFAULT_ACCEPT_SCORE
    min_speed_mps: float = DEFAULT_MIN_SPEED_MPS
    stationary_eps_mps: float = DEFAULT_STATIONARY_EPS_MPS
    band_k: float = DEFAULT_BAND_K
    top_k: int = DEFAULT_TOP_K
    left_positive: bool = True

    def endpoint(self, kind: BackendKind) -> BackendEndpoint:
        return BackendEndpoint(kind=kind, url=self.backend_urls[kind], seed=self.seed)

    def parser_profiles(self) -> list[ParserProfile]:
        return [
            ParserProfile(name, BackendEndpoint(BackendKind.CHAT, url, seed=self.seed))
            for name, url in self.parser_urls.items()
        ]

    def validator(self) -> BackendEndpoint:
        return BackendEndpoint(BackendKind.CHAT, self.validator_url, seed=self.seed)

    def ads_endpoints(self) -> dict[str, BackendEndpoint]:
        return {
            ads_id: BackendEndpoint(BackendKind.PREDICT, url, seed=self.seed)
            for ads_id, url in self.ads_urls.items()
        }

    def load_taxonomy(self) -> OntologyTaxonomy:
        if self.taxonomy_path.startswith("builtin:"):
            return load_builtin_taxonomy(self.taxonomy_path.split(":", 1)[1])
        return load_taxonomy(self.taxonomy_path)

    @property
    def deterministic(self) -> bool:
        urls = [*self.backend_urls.values(), *self.parser_urls.values(),
                self.validator_url, *self.ads_urls.values()]
        return all(url.startswith("mock:") for url in urls)

    def to_dict(self) -> dict:
        return {
            "region": self.region,
            "taxonomy": self.taxonomy_path,
            "seed": self.seed,
            "parallel": self.parallelism,
            "system_name": self.system_name,
            "backends": {kind.value: url for kind, url in sorted(
                self.backend_urls.items(), key=lambda item: item[0].value)},
            "parsers": dict(sorted(self.parser_urls.items())),
            "validator": self.validator_url,
            "ads": dict(sorted(self.ads_urls.items())),
            "thresholds": {
                "accept_score": self.accept_score,
                "v_min": self.min_speed_mps,
                "eps": self.stationary_eps_mps,
                "band_k": self.band_k,
                "top_k": self.top_k,
            },
            "left_positive": self.left_positive,
        }

    @property
    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _apply_values(config: RunConfig, values: dict) -> RunConfig:
    backend_urls = dict(config.backend_urls)
    parser_urls = dict(config.parser_urls)
    ads_urls = dict(config.ads_urls)
    simple: dict = {}
    explicit_parsers = None
    explicit_ads = None
    for key, value in values.items():
        if key.startswith("backend."):
            kind = BackendKind(key.split(".", 1)[1])
            backend_urls[kind] = str(value)
        elif key == "parsers":
            explicit_parsers = [n.strip() for n in str(value).split(",") if n.strip()]
        elif key.startswith("parser."):
            parser_urls[key.split(".", 1)[1]] = str(value)
        elif key == "ads":
            explicit_ads = [n.strip() for n in str(value).split(",") if n.strip()]
        elif key.startswith("ads."):
            ads_urls[key.split(".", 1)[1]] = str(value)
        elif key == "validator":
            simple["validator_url"] = str(value)
        elif key == "taxonomy":
            simple["taxonomy_path"] = str(value)
        elif key == "region":
            simple["region"] = str(value)
        elif key == "seed":
            simple["seed"] = int(value)
        elif key == "parallel":
            simple["parallelism"] = int(value)
        elif key == "system_name":
            simple["system_name"] = str(value)
        elif key == "accept_score":
            simple["accept_score"] = float(value)
        elif key == "v_min":
            simple["min_speed_mps"] = float(value)
        elif key == "eps":
            simple["stationary_eps_mps"] = float(value)
        elif key == "band_k":
            simple["band_k"] = float(value)
        elif key == "top_k":
            simple["top_k"] = int(value)
        elif key == "left_positive":
            simple["left_positive"] = bool(value)
        else:
            raise ParseError(f"unknown config key: {key!r}")
    if explicit_parsers is not None:
        parser_urls = {name: parser_urls.get(name, backend_urls[BackendKind.CHAT])
                       for name in explicit_parsers}
    if explicit_ads is not None:
        ads_urls = {name: ads_urls.get(name, backend_urls[BackendKind.PREDICT])
                    for name in explicit_ads}
    return replace(config, backend_urls=backend_urls, parser_urls=parser_urls,
                   ads_urls=ads_urls, **simple)


def _env_values() -> dict:
    values: dict = {}
    for kind in BackendKind:
        url = os.environ.get(f"AUTOMT_BACKEND_{kind.name}_URL")
        if url:
            values[f"backend.{kind.value}"] = url
    seed = os.environ.get("AUTOMT_MOCK_SEED")
    if seed:
        values["seed"] = int(seed)
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then AUTOMT_* env vars, then the config file, then CLI overrides."""
    config = _apply_values(RunConfig(), _env_values())
    if path is not None:
        config = _apply_values(config, parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        config = _apply_values(config, overrides)
    # taxonomy region tracks --region unless the file pinned a path
    if config.taxonomy_path.startswith("builtin:"):
        config = replace(config, taxonomy_path=f"builtin:{config.region}")
    return config


def parse_backend_table(table: str) -> dict:
    """--backends "chat=URL,embed=URL" into config override keys."""
    overrides = {}
    for part in table.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ParseError(f"bad --backends entry: {part!r}")
        kind, _, url = part.partition("=")
        overrides[f"backend.{kind.strip()}"] = url.strip()
    return overrides
