"""
Registry rows of the death and hospital-discharge databases, and the calendar arithmetic shared by the
whole toolkit. Everything in here is immutable after construction.
"""

from datetime import date
from enum import Enum
from functools import total_ordering
import re

import logging

logger = logging.getLogger(__name__)


class RegistryError(Exception):
    pass


class ParseError(RegistryError):
    def __init__(self, token, message):
        super().__init__('{message}: "{token}"'.format(message=message, token=token))
        self.token = token


class OrderingError(RegistryError):
    def __init__(self, earlier, later):
        super().__init__("{later} lies before {earlier}".format(earlier=earlier, later=later))


class PersonId(object):
    def __init__(self, value: str):
        if not isinstance(value, str) or not value.strip():
            raise ParseError(value, "person id must be a non-empty token")
        self.value = value.strip()

    @staticmethod
    def parse(token):
        """
        empty tokens yield a MissingId
        """
        if token is None or not token.strip():
            return MissingId()
        return PersonId(token)

    def isAbsent(self):
        return False

    def __eq__(self, other):
        return isinstance(other, PersonId) and not other.isAbsent() and self.value == other.value

    def __hash__(self):
        return hash(self.value)

    def __lt__(self, other):
        return str(self) < str(other)

    def __str__(self):
        return self.value

    def __repr__(self):
        return "PersonId({0})".format(self.value)


class MissingId(PersonId):
    # never equal to anything, not even another MissingId
    def __init__(self):
        self.value = ""

    def isAbsent(self):
        return True

    def __eq__(self, other):
        return False

    def __hash__(self):
        return id(self)

    def __repr__(self):
        return "MissingId()"


class Sex(Enum):
    FEMALE = "F"
    MALE = "M"
    UNKNOWN = "U"

    @staticmethod
    def parse(token):
        t = (token or "").strip().upper()
        if t in ["F", "FEMALE", "2"]:
            return Sex.FEMALE
        if t in ["M", "MALE", "1"]:
            return Sex.MALE
        if t in ["", "U", "UNKNOWN", "9"]:
            return Sex.UNKNOWN
        raise ParseError(token, "invalid sex")


class Region(Enum):
    """
    the 16 regions, north to south
    """

    XV = "XV"
    I = "I"  # noqa: E741
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"
    RM = "RM"
    VI = "VI"
    VII = "VII"
    XVI = "XVI"
    VIII = "VIII"
    IX = "IX"
    XIV = "XIV"
    X = "X"
    XI = "XI"
    XII = "XII"

    @staticmethod
    def parse(token):
        t = (token or "").strip().upper()
        # the metropolitan region is also known by its old numeral
        if t == "XIII":
            return Region.RM
        try:
            return Region(t)
        except ValueError:
            raise ParseError(token, "unknown region code")


class InsurerKind(Enum):
    FONASA = "FONASA"
    ISAPRE = "ISAPRE"
    ARMED_FORCES = "ARMED_FORCES"
    NONE = "NONE"
    UNKNOWN = "UNKNOWN"


class FonasaSegment(Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"


class Insurer(object):
    def __init__(self, kind: InsurerKind, segment: FonasaSegment = None):
        if kind is InsurerKind.FONASA and segment is None:
            raise ParseError(kind.value, "FONASA insurer requires a segment")
        if kind is not InsurerKind.FONASA and segment is not None:
            raise ParseError(kind.value, "only FONASA insurers carry a segment")
        self.kind = kind
        self.segment = segment

    @staticmethod
    def parse(token):
        t = (token or "").strip().upper().replace("-", "_").replace(" ", "_")
        if t == "":
            return Insurer(InsurerKind.UNKNOWN)
        if t.startswith("FONASA"):
            segment = t[len("FONASA"):].lstrip("_")
            try:
                return Insurer(InsurerKind.FONASA, FonasaSegment(segment))
            except ValueError:
                raise ParseError(token, "FONASA insurer requires a segment A-D")
        try:
            return Insurer(InsurerKind(t))
        except ValueError:
            raise ParseError(token, "unknown insurer")

    def isKnown(self):
        return self.kind is not InsurerKind.UNKNOWN

    def __eq__(self, other):
        return isinstance(other, Insurer) and self.kind is other.kind and self.segment is other.segment

    def __hash__(self):
        return hash((self.kind, self.segment))

    def __str__(self):
        if self.segment is not None:
            return "{0}_{1}".format(self.kind.value, self.segment.value)
        return self.kind.value

    def __repr__(self):
        return "Insurer({0})".format(self)


CODE_PATTERN = re.compile("^[A-Z][0-9]{2}[0-9X]?$")


def normalize_code(token):
    """
    upper-cases and strips dots, e.g. "c50.9" -> "C509"
    """
    if token is None:
        raise ParseError(token, "missing diagnosis code")
    code = token.strip().upper().replace(".", "")
    if not CODE_PATTERN.match(code):
        raise ParseError(token, "malformed ICD-10 code")
    return code


def parse_date(token):
    try:
        return date.fromisoformat((token or "").strip())
    except ValueError:
        raise ParseError(token, "invalid ISO-8601 date")


@total_ordering
class MonthIndex(object):
    """
    whole months since year 0; day-of-month is dropped
    """

    def __init__(self, value: int):
        self.value = int(value)

    @staticmethod
    def of(d: date):
        return MonthIndex(d.year * 12 + d.month - 1)

    @staticmethod
    def fromYearMonth(year, month):
        if not 1 <= month <= 12:
            raise ParseError(str(month), "invalid month")
        return MonthIndex(year * 12 + month - 1)

    @staticmethod
    def parse(token):
        try:
            year, month = (token or "").strip().split("-")
            return MonthIndex.fromYearMonth(int(year), int(month))
        except ValueError:
            raise ParseError(token, "invalid YYYY-MM month")

    @property
    def year(self):
        return self.value // 12

    @property
    def month(self):
        return self.value % 12 + 1

    def firstDay(self):
        return date(self.year, self.month, 1)

    def __add__(self, months: int):
        return MonthIndex(self.value + months)

    def __sub__(self, other):
        if isinstance(other, MonthIndex):
            return self.value - other.value
        return MonthIndex(self.value - other)

    def __eq__(self, other):
        return isinstance(other, MonthIndex) and self.value == other.value

    def __lt__(self, other):
        return self.value < other.value

    def __hash__(self):
        return hash(self.value)

    def __str__(self):
        return "{0:04d}-{1:02d}".format(self.year, self.month)

    def __repr__(self):
        return "MonthIndex({0})".format(self)


def month_between(earlier: date, later: date) -> int:
    if later < earlier:
        raise OrderingError(earlier, later)
    return MonthIndex.of(later) - MonthIndex.of(earlier)


def age_at(birth: date, at: date) -> int:
    if at < birth:
        raise OrderingError(birth, at)
    return at.year - birth.year - ((at.month, at.day) < (birth.month, birth.day))


class DeathRecord(object):
    fields = ["id", "birth_date", "death_date", "sex", "region", "cause_code"]

    def __init__(self, id: PersonId, birthDate: date, deathDate: date, sex: Sex, region: Region, causeCode: str):
        if deathDate < birthDate:
            raise OrderingError(birthDate, deathDate)
        self.id = id
        self.birthDate = birthDate
        self.deathDate = deathDate
        self.sex = sex
        self.region = region
        self.causeCode = normalize_code(causeCode)

    @staticmethod
    def fromRow(row: dict):
        return DeathRecord(
            PersonId.parse(row.get("id")),
            parse_date(row.get("birth_date")),
            parse_date(row.get("death_date")),
            Sex.parse(row.get("sex")),
            Region.parse(row.get("region")),
            row.get("cause_code"),
        )

    def toRow(self):
        return {
            "id": str(self.id),
            "birth_date": self.birthDate.isoformat(),
            "death_date": self.deathDate.isoformat(),
            "sex": self.sex.value,
            "region": self.region.value,
            "cause_code": self.causeCode,
        }

    def getDeathMonth(self):
        return MonthIndex.of(self.deathDate)

    def ageAtDeath(self):
        return age_at(self.birthDate, self.deathDate)


class DischargeRecord(object):
    fields = [
        "id",
        "birth_date",
        "sex",
        "region",
        "insurer",
        "admission_date",
        "discharge_date",
        "primary_dx",
        "secondary_dx",
    ]

    def __init__(
        self,
        id: PersonId,
        birthDate: date,
        sex: Sex,
        region: Region,
        insurer: Insurer,
        admissionDate: date,
        dischargeDate: date,
        primaryDx: str,
        secondaryDx=None,
    ):
        if dischargeDate < admissionDate:
            raise OrderingError(admissionDate, dischargeDate)
        self.id = id
        self.birthDate = birthDate
        self.sex = sex
        self.region = region
        self.insurer = insurer
        self.admissionDate = admissionDate
        self.dischargeDate = dischargeDate
        self.primaryDx = normalize_code(primaryDx)
        self.secondaryDx = tuple(normalize_code(c) for c in (secondaryDx or []))

    @staticmethod
    def fromRow(row: dict):
        secondary = [c for c in (row.get("secondary_dx") or "").split(";") if c.strip()]
        return DischargeRecord(
            PersonId.parse(row.get("id")),
            parse_date(row.get("birth_date")),
            Sex.parse(row.get("sex")),
            Region.parse(row.get("region")),
            Insurer.parse(row.get("insurer")),
            parse_date(row.get("admission_date")),
            parse_date(row.get("discharge_date")),
            row.get("primary_dx"),
            secondary,
        )

    def toRow(self):
        return {
            "id": str(self.id),
            "birth_date": self.birthDate.isoformat(),
            "sex": self.sex.value,
            "region": self.region.value,
            "insurer": str(self.insurer),
            "admission_date": self.admissionDate.isoformat(),
            "discharge_date": self.dischargeDate.isoformat(),
            "primary_dx": self.primaryDx,
            "secondary_dx": ";".join(self.secondaryDx),
        }

    def getDischargeMonth(self):
        return MonthIndex.of(self.dischargeDate)
