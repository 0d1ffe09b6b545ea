"""
Loading of highD-format recordings.

A recording is three CSV files (``XX_tracks.csv``, ``XX_tracksMeta.csv``,
``XX_recordingMeta.csv``). Loading converts the bounding-box corner x of
highD into the front-bumper position and keeps SI units. Tracks of the
upper carriageway move towards negative x until ``normalize_direction``
mirrors them.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from cfpp.errors import (
    DirectionAmbiguityError,
    IntegrityError,
    SchemaError,
    SeriesRangeError,
)
from cfpp.models import NO_VEHICLE, RecordingBundle, RecordingMeta, Track


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRACK_COLUMNS = (
    "frame",
    "id",
    "x",
    "y",
    "width",
    "height",
    "xVelocity",
    "xAcceleration",
    "laneId",
    "precedingId",
    "followingId",
)
RECORDING_META_COLUMNS = ("id", "frameRate", "duration")
TRACKS_META_COLUMNS = ("id",)

SERIES_FIELDS = ("x", "speed", "accel")


def recording_paths(data_dir: PathLike, recording_id: int) -> Tuple[Path, Path, Path]:
    """
    Resolve the three files of a recording using the highD naming scheme.

    Example:
        >>> recording_paths("data", 3)[0].name
        '03_tracks.csv'
    """
    base = Path(data_dir)
    prefix = f"{recording_id:02d}"
    return (
        base / f"{prefix}_tracks.csv",
        base / f"{prefix}_tracksMeta.csv",
        base / f"{prefix}_recordingMeta.csv",
    )


def _read_csv(path: PathLike, required: Sequence[str]) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    df.columns = [str(c).strip() for c in df.columns]
    for column in required:
        if column not in df.columns:
            raise SchemaError(column, path)
    return df


def _build_track(vehicle_id: int, group: pd.DataFrame) -> Track:
    frames = group["frame"].to_numpy(dtype=np.int64)
    if len(frames) > 1 and not np.all(np.diff(frames) == 1):
        gaps = np.flatnonzero(np.diff(frames) != 1)
        raise IntegrityError(
            vehicle_id, f"frames not contiguous after frame {int(frames[gaps[0]])}"
        )
    length = float(group["width"].iloc[0])
    lateral = float(group["height"].iloc[0])
    velocity = group["xVelocity"].to_numpy(dtype=np.float64)
    corner_x = group["x"].to_numpy(dtype=np.float64)
    # highD x is the box corner with the smaller coordinate; the front bumper
    # is the larger end for vehicles moving towards positive x.
    front_x = corner_x + length if velocity.mean() >= 0 else corner_x
    return Track(
        vehicle_id=vehicle_id,
        length=length,
        width=lateral,
        frame=frames,
        x=front_x,
        y=group["y"].to_numpy(dtype=np.float64),
        speed=velocity,
        accel=group["xAcceleration"].to_numpy(dtype=np.float64),
        lane_id=group["laneId"].to_numpy(dtype=np.int64),
        preceding_id=group["precedingId"].fillna(NO_VEHICLE).to_numpy(dtype=np.int64),
        following_id=group["followingId"].fillna(NO_VEHICLE).to_numpy(dtype=np.int64),
    )


def load_recording(
    tracks_path: PathLike,
    tracks_meta_path: PathLike,
    recording_meta_path: PathLike,
) -> RecordingBundle:
    """
    Load one recording into an immutable bundle.

    Args:
        tracks_path: ``XX_tracks.csv``
        tracks_meta_path: ``XX_tracksMeta.csv``
        recording_meta_path: ``XX_recordingMeta.csv``

    Returns:
        RecordingBundle with one Track per vehicle, frames in order

    Raises:
        SchemaError: If a required column is missing
        IntegrityError: If a vehicle's frames are not contiguous
    """
    recording_df = _read_csv(recording_meta_path, RECORDING_META_COLUMNS)
    tracks_meta_df = _read_csv(tracks_meta_path, TRACKS_META_COLUMNS)
    tracks_df = _read_csv(tracks_path, TRACK_COLUMNS)

    row = recording_df.iloc[0]
    meta = RecordingMeta(
        recording_id=int(row["id"]),
        frame_rate_hz=float(row["frameRate"]),
        duration_s=float(row["duration"]),
        location_id=int(row["locationId"]) if "locationId" in recording_df.columns else 0,
    )

    tracks: Dict[int, Track] = {}
    if len(tracks_df):
        tracks_df = tracks_df.sort_values(["id", "frame"], kind="mergesort")
        for vehicle_id, group in tracks_df.groupby("id", sort=True):
            tracks[int(vehicle_id)] = _build_track(int(vehicle_id), group)

    if len(tracks_meta_df) != len(tracks):
        logger.warning(
            f"Recording {meta.recording_id}: tracksMeta lists {len(tracks_meta_df)} vehicles, "
            f"tracks file has {len(tracks)}"
        )
    logger.info(f"Loaded recording {meta.recording_id} with {len(tracks)} tracks")
    return RecordingBundle(meta=meta, tracks=tracks)


def load_recordings(
    data_dir: PathLike,
    recording_ids: Iterable[int],
    max_workers: int = 1,
) -> List[RecordingBundle]:
    """
    Load several recordings, concurrently when ``max_workers > 1``.

    Returns:
        Bundles ordered by recording id
    """
    ids = sorted(set(recording_ids))
    paths = [recording_paths(data_dir, rid) for rid in ids]
    if max_workers <= 1:
        return [load_recording(*p) for p in paths]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda p: load_recording(*p), paths))


def normalize_direction(bundle: RecordingBundle) -> RecordingBundle:
    """
    Mirror tracks moving towards negative x so every track moves forward.

    Mirrored tracks get ``x' = x_max - x`` (``x_max`` over the whole
    recording) and negated speed and acceleration. Already forward tracks
    are returned as the same objects, so the operation is idempotent.

    Raises:
        DirectionAmbiguityError: If a track's mean velocity is exactly 0
    """
    means = {vid: float(track.speed.mean()) for vid, track in bundle.tracks.items()}
    ambiguous = [vid for vid, mean in means.items() if mean == 0.0]
    if ambiguous:
        raise DirectionAmbiguityError(ambiguous)

    backward = [vid for vid, mean in means.items() if mean < 0.0]
    if not backward:
        return bundle

    x_max = max(float(track.x.max()) for track in bundle.tracks.values())
    tracks = dict(bundle.tracks)
    for vid in backward:
        track = tracks[vid]
        tracks[vid] = Track(
            **{
                **track.model_dump(),
                "x": x_max - track.x,
                "speed": -track.speed,
                "accel": -track.accel,
            }
        )
    logger.info(
        f"Recording {bundle.meta.recording_id}: mirrored {len(backward)} of {len(tracks)} tracks"
    )
    return RecordingBundle(meta=bundle.meta, tracks=tracks)


def slice_series(track: Track, frame_lo: int, frame_hi: int, field: str) -> np.ndarray:
    """
    Values of ``field`` over the inclusive frame window.

    Raises:
        ValueError: If ``field`` is not one of x, speed, accel
        SeriesRangeError: If the window is empty or outside the track
    """
    if field not in SERIES_FIELDS:
        raise ValueError(f"field must be one of {SERIES_FIELDS}, got '{field}'")
    if frame_lo > frame_hi:
        raise SeriesRangeError(f"frame_lo {frame_lo} is after frame_hi {frame_hi}")
    if not track.covers(frame_lo, frame_hi):
        raise SeriesRangeError(
            f"frames {frame_lo}..{frame_hi} outside vehicle {track.vehicle_id} "
            f"span {track.first_frame}..{track.last_frame}"
        )
    lo = track.index_of(frame_lo)
    hi = track.index_of(frame_hi)
    return getattr(track, field)[lo : hi + 1]


def write_recording(
    bundle: RecordingBundle,
    directory: PathLike,
    recording_id: Optional[int] = None,
) -> Tuple[Path, Path, Path]:
    """
    Write a bundle back to the three-file highD schema.

    Front-bumper positions are converted back to box corners, so reloading
    the files gives the same tracks.
    """
    rid = bundle.meta.recording_id if recording_id is None else recording_id
    tracks_path, tracks_meta_path, recording_meta_path = recording_paths(directory, rid)
    tracks_path.parent.mkdir(parents=True, exist_ok=True)

    track_frames = []
    meta_rows = []
    for vid in sorted(bundle.tracks):
        track = bundle.tracks[vid]
        forward = track.speed.mean() >= 0
        corner_x = track.x - track.length if forward else track.x
        track_frames.append(
            pd.DataFrame(
                {
                    "frame": track.frame,
                    "id": vid,
                    "x": corner_x,
                    "y": track.y,
                    "width": track.length,
                    "height": track.width,
                    "xVelocity": track.speed,
                    "xAcceleration": track.accel,
                    "laneId": track.lane_id,
                    "precedingId": track.preceding_id,
                    "followingId": track.following_id,
                }
            )
        )
        meta_rows.append(
            {
                "id": vid,
                "width": track.length,
                "height": track.width,
                "initialFrame": track.first_frame,
                "finalFrame": track.last_frame,
                "numFrames": len(track.frame),
                "class": "Car",
                "drivingDirection": 2 if forward else 1,
            }
        )

    tracks_df = (
        pd.concat(track_frames, ignore_index=True)
        if track_frames
        else pd.DataFrame(columns=list(TRACK_COLUMNS))
    )
    tracks_df = tracks_df.sort_values(["frame", "id"], kind="mergesort")
    tracks_df.to_csv(tracks_path, index=False, columns=list(TRACK_COLUMNS))
    pd.DataFrame(
        meta_rows,
        columns=["id", "width", "height", "initialFrame", "finalFrame", "numFrames", "class", "drivingDirection"],
    ).to_csv(tracks_meta_path, index=False)
    pd.DataFrame(
        [
            {
                "id": rid,
                "frameRate": bundle.meta.frame_rate_hz,
                "locationId": bundle.meta.location_id,
                "duration": bundle.meta.duration_s,
                "numVehicles": len(bundle.tracks),
            }
        ]
    ).to_csv(recording_meta_path, index=False)
    return tracks_path, tracks_meta_path, recording_meta_path
