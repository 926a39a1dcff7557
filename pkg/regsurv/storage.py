from regsurv.registry import DeathRecord, DischargeRecord, RegistryError, ParseError
from regsurv.cohort import PatientTimeline, CohortAccounting
from contextlib import contextmanager
import csv
import json
import os
import pandas as pd

import logging

logger = logging.getLogger(__name__)


def _uncommented(f):
    for line in f:
        if line.lstrip().startswith("#"):
            continue
        yield line


def read_frame(path):
    """
    a comma-separated file with a header line as a DataFrame of text columns; "#" starts a comment
    """
    try:
        return pd.read_csv(path, comment="#", dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ParseError(path, "unreadable table ({0})".format(e))


def read_records(path, factory):
    """
    parse every row through `factory`; rows that fail are logged and counted, not fatal

    returns a tuple of (records, rejected row count)
    """
    records = []
    rejected = 0
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(_uncommented(f))
        for row in reader:
            try:
                records.append(factory(row))
            except RegistryError as e:
                rejected += 1
                logger.warning("%s:%i: rejected row: %s", path, reader.line_num, e)
    if rejected:
        logger.warning("%s: %i rows rejected, %i accepted", path, rejected, len(records))
    return records, rejected


def read_deaths(path):
    return read_records(path, DeathRecord.fromRow)


def read_discharges(path):
    return read_records(path, DischargeRecord.fromRow)


@contextmanager
def atomic_writer(path):
    """
    write to a temporary file next to `path` and rename it into place once the block succeeded
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp = "{0}.tmp".format(path)
    try:
        with open(tmp, "w", newline="") as f:
            yield f
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, fieldnames, rows):
    with atomic_writer(path) as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    logger.debug("wrote %s", path)


def write_json(path, data):
    with atomic_writer(path) as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug("wrote %s", path)


def read_json(path):
    with open(path, "r") as f:
        return json.load(f)


def write_deaths(path, deaths):
    write_csv(path, DeathRecord.fields, [d.toRow() for d in deaths])


def write_discharges(path, discharges):
    write_csv(path, DischargeRecord.fields, [d.toRow() for d in discharges])


def write_cohort(path, timelines):
    write_csv(path, PatientTimeline.fields, [t.toRow() for t in timelines])


def read_cohort(path):
    timelines, rejected = read_records(path, PatientTimeline.fromRow)
    if rejected:
        raise RegistryError("{0}: {1} invalid cohort rows".format(path, rejected))
    return timelines


def write_accounting(path, accounting: CohortAccounting):
    write_json(path, accounting.toJson())


def read_accounting(path):
    return CohortAccounting.fromJson(read_json(path))
