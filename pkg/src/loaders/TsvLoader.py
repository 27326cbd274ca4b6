import csv
import io
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from Errors import ConfigError, DataError
from HypergraphCore import InteractionRecord
from loaders.BaseLoader import BaseLoader, Dataset

logger = logging.getLogger(__name__)


def _read_tsv(path, names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise DataError(f"cannot decode {path}: {e}") from e

    # comment lines never reach the parser
    body = "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))
    try:
        frame = pd.read_csv(
            io.StringIO(body),
            sep="\t",
            header=None,
            names=names,
            index_col=False,
            dtype=str,
            keep_default_na=False,
            quoting=csv.QUOTE_NONE,
        )
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(names or []))
    except pd.errors.ParserError as e:
        raise DataError(f"cannot parse {path}: {e}") from e

    return frame.fillna("")


def read_interactions(path) -> List[InteractionRecord]:
    """user_id<TAB>item_id[<TAB>timestamp]"""
    frame = _read_tsv(path, ["user", "item", "timestamp"])
    records = []
    for row in frame.itertuples(index=False):
        if not row.user or not row.item:
            raise DataError(f"{path}: interaction row without user or item: {tuple(row)}")
        timestamp = None
        if row.timestamp != "":
            try:
                timestamp = int(row.timestamp)
            except ValueError:
                raise DataError(f"{path}: timestamp '{row.timestamp}' is not an integer") from None
        records.append(InteractionRecord(row.user, row.item, timestamp))
    return records


def read_categories(path) -> List[Tuple[str, str]]:
    """item_id<TAB>category_id"""
    frame = _read_tsv(path, ["item", "category"])
    missing = frame[(frame["item"] == "") | (frame["category"] == "")]
    if len(missing):
        raise DataError(f"{path}: {len(missing)} category rows without item or category")
    return list(zip(frame["item"], frame["category"]))


def read_aux(path) -> Dict[str, Tuple[float, ...]]:
    """user_id<TAB>f1<TAB>f2... with the same width on every row"""
    frame = _read_tsv(path)
    if frame.empty:
        return {}
    try:
        values = frame.iloc[:, 1:].astype(float)
    except ValueError as e:
        raise DataError(f"{path}: auxiliary features must be numeric with one width per row: {e}") from e
    return {str(user): tuple(row) for user, row in zip(frame.iloc[:, 0], values.itertuples(index=False))}


class TsvLoader(BaseLoader):
    """Interaction log, category map and optional auxiliary features from TSV files"""

    def load(self, cfg, seed: int) -> Dataset:
        paths = cfg.paths
        if paths.interactions is None or paths.categories is None:
            raise ConfigError("paths.interactions and paths.categories are required for source=tsv")

        records = read_interactions(paths.interactions)
        pairs = read_categories(paths.categories)
        aux = read_aux(paths.aux) if paths.aux is not None else {}
        logger.info(
            "loaded %d interactions, %d category rows, %d auxiliary rows",
            len(records), len(pairs), len(aux),
        )
        return Dataset(tuple(records), tuple(pairs), aux)
