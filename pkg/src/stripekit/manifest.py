"""Dataset manifest records: the JSON-lines glue between pipeline stages.

One row pairs an image with its descriptor text, identity label, flank
side, split assignment, and view index. Field names are fixed; rows may
additionally carry the capture parameters that produced the image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class ManifestRow:
    image_path: str
    text: str
    id: str
    side: str
    split: str = "unassigned"
    view_index: int = 0
    capture: dict | None = None

    def to_dict(self) -> dict:
        d = {
            "image_path": self.image_path,
            "text": self.text,
            "id": self.id,
            "side": self.side,
            "split": self.split,
            "view_index": self.view_index,
        }
        if self.capture is not None:
            d["capture"] = self.capture
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestRow":
        return cls(
            image_path=d["image_path"],
            text=d["text"],
            id=d["id"],
            side=d["side"],
            split=d.get("split", "unassigned"),
            view_index=int(d.get("view_index", 0)),
            capture=d.get("capture"),
        )


def write_manifest(path: str | Path, rows: list[ManifestRow]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row.to_dict(), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[ManifestRow]:
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(ManifestRow.from_dict(json.loads(line)))
    return rows


def distinct_ids(rows: list[ManifestRow]) -> list[str]:
    """Identity labels in first-appearance order."""
    seen: dict[str, None] = {}
    for row in rows:
        seen.setdefault(row.id, None)
    return list(seen)
