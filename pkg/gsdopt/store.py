"""sqlite cache of optimizer results, keyed by a hash of the rate-free spec."""
from __future__ import annotations

import datetime
import hashlib
import json
import logging
import os
import sqlite3
from dataclasses import asdict
from typing import Optional, Tuple

from gsdopt.config import default_db_path, spec_to_dict
from gsdopt.design import DesignSpec
from gsdopt.model import InformationRates
from gsdopt.optimizer import OptimConfig, OptimResult

logger = logging.getLogger(__name__)

SCHEMA_SQL = """
PRAGMA journal_mode=WAL;
CREATE TABLE IF NOT EXISTS optim_results(
  id INTEGER PRIMARY KEY,
  spec_hash TEXT UNIQUE,
  stages INTEGER, family TEXT, beta REAL, sided TEXT, futility TEXT,
  rates_json TEXT, objective REAL, ess_h1 REAL,
  evaluations INTEGER, restarts INTEGER, converged INTEGER,
  created_at TEXT
);
"""


class ResultStore:
    def __init__(self, path: Optional[str] = None):
        self.path = path or default_db_path()

    def connect(self) -> sqlite3.Connection:
        db_dir = os.path.dirname(self.path)
        if db_dir:
            os.makedirs(db_dir, exist_ok=True)
        con = sqlite3.connect(self.path)
        con.executescript(SCHEMA_SQL)
        return con

    @staticmethod
    def spec_hash(spec: DesignSpec, config: OptimConfig) -> str:
        doc = {"spec": spec_to_dict(spec.with_rates(None)), "optimizer": asdict(config)}
        doc["optimizer"].pop("workers")
        text = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def lookup(self, spec: DesignSpec, config: OptimConfig) -> Optional[OptimResult]:
        h = self.spec_hash(spec, config)
        con = self.connect()
        try:
            row = con.execute(
                "SELECT rates_json, objective, ess_h1, evaluations, restarts, converged "
                "FROM optim_results WHERE spec_hash=?", (h,)).fetchone()
        finally:
            con.close()
        if row is None:
            return None
        logger.debug("cache hit %s", h[:12])
        rates, obj, ess, evals, restarts, converged = row
        return OptimResult(InformationRates(tuple(json.loads(rates))), obj, ess, evals,
                           restarts, bool(converged))

    def save(self, spec: DesignSpec, config: OptimConfig, result: OptimResult) -> Tuple[int, bool]:
        """Insert ``result``; returns (id, created). An existing row is left as is."""
        h = self.spec_hash(spec, config)
        now = datetime.datetime.now(datetime.timezone.utc).isoformat()
        con = self.connect()
        try:
            cur = con.cursor()
            cur.execute("SELECT id FROM optim_results WHERE spec_hash=?", (h,))
            row = cur.fetchone()
            if row:
                return row[0], False
            cur.execute(
                "INSERT INTO optim_results VALUES(NULL,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                (h, spec.stages, spec.boundary_rule.family.value, spec.beta,
                 spec.sidedness.value, spec.futility.mode.value,
                 json.dumps(list(result.rates.values)), result.objective, result.ess_h1,
                 result.evaluations, result.restarts_used, int(result.converged), now))
            con.commit()
            return cur.lastrowid, True
        finally:
            con.close()
