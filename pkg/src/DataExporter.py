import io
import json
import zipfile
from pathlib import Path
from typing import Any, Dict, Iterable, Tuple

import numpy as np
import pandas as pd

from DataSplitter import SplitBundle
from Errors import DataError
from HypergraphCore import HeteroHypergraph, IdMap
from HypergraphModel import ModelParams

CHECKPOINT_FORMAT = "hyperrec-checkpoint"
CHECKPOINT_VERSION = 1
# fixed member timestamp so identical parameters give identical bytes
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _prepare(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_lines(lines: Iterable[str], path):
    with open(_prepare(path), "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")


class DataExporter:
    """Persist run artifacts in their documented formats"""

    @staticmethod
    def to_json(data: Dict, output_path):
        """Export to JSON"""
        with open(_prepare(output_path), "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")

    @staticmethod
    def to_csv(frame: pd.DataFrame, output_path, sep: str = ","):
        frame.to_csv(_prepare(output_path), sep=sep, index=False, lineterminator="\n")

    @staticmethod
    def write_id_map(ids: IdMap, output_path):
        """kind<TAB>external_id<TAB>ordinal"""
        _write_lines((f"{kind}\t{ext}\t{ordinal}" for kind, ext, ordinal in ids.rows()), output_path)

    @staticmethod
    def read_id_map(path) -> IdMap:
        path = Path(path)
        if not path.is_file():
            raise DataError(f"id map not found: {path}")
        rows = []
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}: malformed id map line '{line}'")
            rows.append(tuple(parts))
        return IdMap.from_rows(rows)

    @staticmethod
    def write_hypergraph(hh: HeteroHypergraph, output_path):
        _write_lines(hh.to_lines(), output_path)

    @staticmethod
    def read_hypergraph(path, ids: IdMap) -> HeteroHypergraph:
        path = Path(path)
        if not path.is_file():
            raise DataError(f"hypergraph file not found: {path}")
        return HeteroHypergraph.from_lines(path.read_text(encoding="utf-8").splitlines(), ids)

    @staticmethod
    def write_completion(report, ids: IdMap, output_path):
        """Added hyperedges with their provenance"""
        rows = [
            (ids.users[r.user], r.cluster, ids.categories[r.category], ",".join(ids.items[i] for i in r.items))
            for r in report.added
        ]
        DataExporter.to_csv(pd.DataFrame(rows, columns=["user", "cluster", "category", "items"]), output_path, sep="\t")

    @staticmethod
    def write_views(views, output_path):
        """view_id<TAB>v0<TAB>|V|<TAB>hyperedge indices"""
        _write_lines((view.to_line(index) for index, view in enumerate(views)), output_path)

    @staticmethod
    def write_split(bundle: SplitBundle, ids: IdMap, output_path):
        _write_lines((f"{ids.users[u]}\t{ids.items[i]}\t{part}" for u, i, part in bundle.rows()), output_path)

    @staticmethod
    def write_stats(stats: Dict[str, Any], output_path):
        DataExporter.to_csv(pd.DataFrame([stats]), output_path)

    @staticmethod
    def write_history(history: pd.DataFrame, output_path):
        DataExporter.to_csv(history, output_path)

    @staticmethod
    def write_metrics(report, output_path, per_user_path=None):
        DataExporter.to_csv(report.to_frame(), output_path)
        if per_user_path is not None:
            DataExporter.to_csv(report.per_user, per_user_path)

    @staticmethod
    def write_dataset(dataset, output_dir):
        """interactions.tsv, categories.tsv and, for synthetic data, planted_clusters.tsv"""
        output_dir = Path(output_dir)
        _write_lines(
            (
                f"{r.user}\t{r.item}" if r.timestamp is None else f"{r.user}\t{r.item}\t{r.timestamp}"
                for r in dataset.records
            ),
            output_dir / "interactions.tsv",
        )
        _write_lines((f"{item}\t{cat}" for item, cat in dataset.category_pairs), output_dir / "categories.tsv")
        if dataset.planted_labels:
            _write_lines(
                (f"{user}\t{label}" for user, label in dataset.planted_labels.items()),
                output_dir / "planted_clusters.tsv",
            )

    @staticmethod
    def save_checkpoint(params: ModelParams, output_path, fingerprint: str = "", extra: Dict[str, Any] = None):
        """
        Zip of .npy members plus meta.json, readable with np.load. Member
        order and timestamps are fixed so equal parameters give equal bytes.
        """
        tensors = params.tensors()
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "fingerprint": fingerprint,
            "dtype": str(params.dtype),
            "tensors": {name: list(t.shape) for name, t in tensors.items()},
        }
        meta.update(extra or {})

        with zipfile.ZipFile(_prepare(output_path), "w", compression=zipfile.ZIP_STORED) as archive:
            for name, tensor in tensors.items():
                buffer = io.BytesIO()
                np.lib.format.write_array(buffer, np.ascontiguousarray(tensor), allow_pickle=False)
                archive.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=ZIP_EPOCH), buffer.getvalue())
            archive.writestr(
                zipfile.ZipInfo("meta.json", date_time=ZIP_EPOCH),
                json.dumps(meta, sort_keys=True).encode("utf-8"),
            )

    @staticmethod
    def load_checkpoint(path) -> Tuple[ModelParams, Dict[str, Any]]:
        path = Path(path)
        if not path.is_file():
            raise DataError(f"checkpoint not found: {path}")
        try:
            with zipfile.ZipFile(path) as archive:
                meta = json.loads(archive.read("meta.json"))
                if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
                    raise DataError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint")
                tensors = {
                    name: np.lib.format.read_array(io.BytesIO(archive.read(f"{name}.npy")), allow_pickle=False)
                    for name in meta["tensors"]
                }
        except (zipfile.BadZipFile, KeyError, ValueError) as e:
            raise DataError(f"cannot read checkpoint {path}: {e}") from e
        for name, shape in meta["tensors"].items():
            if list(tensors[name].shape) != shape:
                raise DataError(f"checkpoint tensor {name} has shape {tensors[name].shape}, header says {shape}")
        return ModelParams.from_tensors(tensors), meta
