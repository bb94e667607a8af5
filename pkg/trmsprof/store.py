"""
Profile tuples and the ProfileStore collected by a replay
"""

import io
import logging
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Iterator, List, Union

import pandas as pd

from trmsprof.errors import MalformedProfile

log = logging.getLogger(__name__)

# Routine id of the synthetic frame that owns accesses made outside any call.
ROOT_ROUTINE = -1
ROOT_NAME = "<root>"


@dataclass(frozen=True)
class ProfileTuple:
    """
    One completed (or force-completed) routine activation

    induced_* counters are inclusive of descendants; self_induced_* count
    only the reads issued while this activation was on top of its stack.
    """

    rtn: int
    tid: int
    trms: int
    rms: int
    cost: int
    induced_thread: int
    induced_external: int
    truncated: bool = False
    self_induced_thread: int = 0
    self_induced_external: int = 0


CSV_COLUMNS = [f.name for f in fields(ProfileTuple)]


class ProfileStore:
    """Immutable, ordered collection of ProfileTuples (emission order)"""

    def __init__(self, tuples: Iterable[ProfileTuple] = ()):
        self._tuples = tuple(tuples)

    def __iter__(self) -> Iterator[ProfileTuple]:
        return iter(self._tuples)

    def __len__(self) -> int:
        return len(self._tuples)

    def __getitem__(self, index):
        return self._tuples[index]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProfileStore):
            return NotImplemented
        return self._tuples == other._tuples

    def __repr__(self) -> str:
        return f"ProfileStore({len(self._tuples)} tuples)"

    @property
    def tuples(self) -> List[ProfileTuple]:
        return list(self._tuples)

    def for_routine(self, rtn: int) -> List[ProfileTuple]:
        return [t for t in self._tuples if t.rtn == rtn]

    # ------------------------------------------------------------------------
    # Tabular form
    # ------------------------------------------------------------------------

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([astuple(t) for t in self._tuples], columns=CSV_COLUMNS)
        frame['truncated'] = frame['truncated'].astype(int)
        return frame.astype({c: 'int64' for c in CSV_COLUMNS})

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, source: str = "<profile>") -> "ProfileStore":
        """
        Rebuild a store from a profile table

        Raises:
            MalformedProfile: a required column is missing or holds non-integers
        """
        missing = [c for c in CSV_COLUMNS[:8] if c not in frame.columns]
        if missing:
            raise MalformedProfile(source, f"profile table lacks columns: {', '.join(missing)}")
        frame = frame.copy()
        for column in ('self_induced_thread', 'self_induced_external'):
            if column not in frame.columns:
                frame[column] = 0
        try:
            tuples = [
                ProfileTuple(
                    rtn=int(row.rtn), tid=int(row.tid), trms=int(row.trms), rms=int(row.rms),
                    cost=int(row.cost), induced_thread=int(row.induced_thread),
                    induced_external=int(row.induced_external), truncated=bool(int(row.truncated)),
                    self_induced_thread=int(row.self_induced_thread),
                    self_induced_external=int(row.self_induced_external),
                )
                for row in frame.itertuples(index=False)
            ]
        except (TypeError, ValueError) as e:
            raise MalformedProfile(source, f"non-integer profile value ({e})") from None
        return cls(tuples)

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        """
        Serialise as CSV, one row per tuple

        Args:
            path: Destination file; when None only the text is returned

        Returns:
            CSV text
        """
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, lineterminator="\n")
        text = buffer.getvalue()
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding='utf-8')
            log.info(f"✓ Saved {len(self):,} profile tuples to {path}")
        return text

    @classmethod
    def from_csv(cls, source: Union[str, Path, io.StringIO]) -> "ProfileStore":
        """
        Read a CSV written by to_csv

        Raises:
            MalformedProfile: empty, unparsable or missing profile columns
        """
        name = "<buffer>" if isinstance(source, io.StringIO) else Path(source).name
        try:
            frame = pd.read_csv(source)
        except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
            raise MalformedProfile(name, f"unreadable profile CSV ({e})") from None
        return cls.from_frame(frame, source=str(name))
