"""Model size comparison of specs."""

import logging
from pathlib import Path
from typing import List, Sequence, Union

import pandas as pd

from models.spec import ModelSpec, count_parameters, named_spec, spec_names


logger = logging.getLogger(__name__)

SpecRef = Union[str, Path, ModelSpec]


def resolve_spec(ref: SpecRef) -> ModelSpec:
    """A ModelSpec, a named spec, or the path of a spec JSON file."""
    if isinstance(ref, ModelSpec):
        return ref
    if str(ref) in spec_names():
        return named_spec(str(ref))
    path = Path(ref)
    if not path.is_file():
        return named_spec(str(ref))
    return ModelSpec.from_json(path.read_text(encoding="utf-8"))


def size_table(refs: Sequence[SpecRef]) -> pd.DataFrame:
    """
    Layers, widths and parameter counts of each spec.

    Sizes exclude task heads. `relative_size` is relative to the first spec.

    Examples:
        >>> size_table(["bert_base", "t6"])["relative_size"].round(1).tolist()
        [1.0, 0.6]
    """
    rows: List[dict] = []
    for ref in refs:
        spec = resolve_spec(ref)
        counts = count_parameters(spec)
        rows.append(
            {
                "spec": ref if isinstance(ref, str) else spec.kind.value,
                "kind": spec.kind.value,
                "layers": spec.num_layers,
                "hidden": spec.hidden_size,
                "feed_forward": spec.feed_forward_size,
                "parameters": counts.total,
                "non_embedding": counts.non_embedding,
            }
        )
    table = pd.DataFrame(rows)
    if not table.empty:
        table["relative_size"] = table["parameters"] / table["parameters"].iloc[0]
    return table


def format_table(table: pd.DataFrame) -> str:
    shown = table.copy()
    shown["parameters"] = (shown["parameters"] / 1e6).map(lambda v: f"{v:.1f}M")
    shown["non_embedding"] = (shown["non_embedding"] / 1e6).map(lambda v: f"{v:.1f}M")
    shown["relative_size"] = shown["relative_size"].map(lambda v: f"{100 * v:.0f}%")
    return shown.to_string(index=False)
