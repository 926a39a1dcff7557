from regsurv.registry import normalize_code, ParseError
from enum import Enum
import os

import logging

logger = logging.getLogger(__name__)


class RuleSetError(Exception):
    pass


class Category(Enum):
    PRIMARY = "primary"
    GROUP1 = "1"
    GROUP2 = "2"
    GROUP3 = "3"
    UNRELATED = "unrelated"


class Classification(object):
    def __init__(self, category: Category, period: int = None):
        self.category = category
        # relation period in years; only group 3 carries one, None means unlimited
        self.period = period

    def isPrimary(self):
        return self.category is Category.PRIMARY

    def isRelated(self):
        return self.category in [Category.GROUP1, Category.GROUP2, Category.GROUP3]

    def admitsGap(self, months: int):
        """
        whether a related discharge this many months before death may be linked to the death
        """
        if self.category is Category.GROUP3 and self.period is not None:
            return months <= self.period * 12
        return self.isRelated()

    def __eq__(self, other):
        return isinstance(other, Classification) and self.category is other.category and self.period == other.period

    def __hash__(self):
        return hash((self.category, self.period))

    def __repr__(self):
        if self.category is Category.GROUP3:
            return "Classification(3, period={0})".format(self.period)
        return "Classification({0})".format(self.category.value)


UNRELATED = Classification(Category.UNRELATED)
PRIMARY = Classification(Category.PRIMARY)


class CodeRuleSet(object):
    """
    Breast-cancer code lists. Entries ending in "X" are placeholders matching the three-character
    stem with any or no fourth character.
    """

    defaultFile = os.path.join(os.path.dirname(__file__), "data", "codes.conf")

    def __init__(self, primaryCodes, group1=None, group2=None, group3: dict = None):
        self.primaryCodes = frozenset(CodeRuleSet._normalizePrefix(p) for p in primaryCodes)
        if not self.primaryCodes:
            raise RuleSetError("at least one primary prefix is required")
        self.exact = {}
        self.stems = {}
        entries = [(c, Classification(Category.GROUP1)) for c in group1 or []]
        entries += [(c, Classification(Category.GROUP2)) for c in group2 or []]
        for code, period in (group3 or {}).items():
            if period is not None and (not isinstance(period, int) or isinstance(period, bool) or not 1 <= period <= 10):
                raise RuleSetError("relation period of {0} must be an integer between 1 and 10".format(code))
            entries.append((code, Classification(Category.GROUP3, period)))
        for code, classification in entries:
            self._add(normalize_code(code), classification)
        self._checkDisjoint()

    @staticmethod
    def _normalizePrefix(prefix):
        p = prefix.strip().upper().replace(".", "")
        if not p or not p[0].isalpha() or not p[1:].isdigit():
            raise ParseError(prefix, "malformed primary prefix")
        return p

    def _add(self, code, classification):
        if self._matchesPrimary(code):
            # primary classification wins; the duplicate is dropped
            logger.debug("dropping %s from group %s: covered by a primary prefix", code, classification.category.value)
            return
        target = self.stems if code.endswith("X") else self.exact
        key = code[:3] if code.endswith("X") else code
        if key in target and target[key] != classification:
            raise RuleSetError("{0} is listed in two groups".format(code))
        target[key] = classification

    def _checkDisjoint(self):
        for code, classification in self.exact.items():
            stem = self.stems.get(code[:3])
            if stem is not None and stem != classification:
                raise RuleSetError("{0} overlaps placeholder {1}X of another group".format(code, code[:3]))

    def _matchesPrimary(self, code):
        return any(code.startswith(p) for p in self.primaryCodes)

    def classify(self, code) -> Classification:
        code = normalize_code(code)
        if self._matchesPrimary(code):
            return PRIMARY
        if code in self.exact:
            return self.exact[code]
        if code[:3] in self.stems:
            return self.stems[code[:3]]
        return UNRELATED

    def isPrimary(self, code):
        return self.classify(code).isPrimary()

    def entries(self):
        result = [(c, cl) for c, cl in self.exact.items()]
        result += [(s + "X", cl) for s, cl in self.stems.items()]
        return sorted(result, key=lambda e: (e[1].category.value, e[0]))

    @staticmethod
    def load(file=None):
        file = CodeRuleSet.defaultFile if file is None else file
        with open(file, "r") as f:
            return CodeRuleSet.parse(f.read(), source=file)

    @staticmethod
    def parse(text, source="<rules>"):
        """
        [primary] lists one prefix per line; [related] lists "code,category,period_years" lines with an
        empty period meaning unlimited
        """
        section = None
        primary = []
        groups = {"1": [], "2": [], "3": {}}
        for lineNumber, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                if section not in ["primary", "related"]:
                    raise RuleSetError("{0}:{1}: unknown section [{2}]".format(source, lineNumber, section))
                continue
            if section == "primary":
                primary.append(line)
            elif section == "related":
                parts = [p.strip() for p in line.split(",")]
                if len(parts) == 2:
                    parts.append("")
                if len(parts) != 3 or parts[1] not in groups:
                    raise RuleSetError("{0}:{1}: expected code,category,period_years".format(source, lineNumber))
                code, category, period = parts
                if category == "3":
                    try:
                        groups["3"][code] = int(period) if period else None
                    except ValueError:
                        raise RuleSetError("{0}:{1}: invalid period {2}".format(source, lineNumber, period))
                else:
                    if period:
                        raise RuleSetError("{0}:{1}: only group 3 carries a period".format(source, lineNumber))
                    groups[category].append(code)
            else:
                raise RuleSetError("{0}:{1}: entry outside of a section".format(source, lineNumber))
        return CodeRuleSet(primary, groups["1"], groups["2"], groups["3"])


def classify_diagnosis(code, rules: CodeRuleSet) -> Classification:
    return rules.classify(code)
