"""
Track store: dataset records -> in-memory lookups for recommendation queries
"""

from collections.abc import Mapping
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Union

import pandas as pd

from engine.ingest import compute_stats, stats_to_frame, write_dataset
from engine.models import TrackRecord


class TrackStore(Mapping):
    """Read-only track_id -> TrackRecord mapping that keeps dataset order"""

    def __init__(self, records: Sequence[TrackRecord]):
        self._records: Dict[str, TrackRecord] = {r.track_id: r for r in records}

    def __getitem__(self, track_id: str) -> TrackRecord:
        return self._records[track_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> List[TrackRecord]:
        return list(self._records.values())

    def get_statistics(self) -> Dict[str, int]:
        """Dataset statistics"""
        records = self._records.values()
        return {
            "tracks": len(self._records),
            "artists": len({r.artist_id for r in records}),
            "with_segments": sum(1 for r in records if r.segments is not None),
            "with_terms": sum(1 for r in records if r.artist_terms),
        }

    def feature_table(self, workers: Optional[int] = None) -> pd.DataFrame:
        """FeatureStats of the stored records as a DataFrame"""
        if not self._records:
            return pd.DataFrame()
        return stats_to_frame(compute_stats(self.records(), workers=workers))

    def export(self, output_path: Union[str, Path], format: Optional[str] = None) -> Path:
        """
        Export tracks as JSONL, CSV or Excel

        Args:
            output_path: Output file path
            format: jsonl / csv / xlsx (inferred from suffix when None)

        Returns:
            Path written
        """
        return write_dataset(self.records(), output_path, format)
