#    Copyright traj-exit contributors
#
#    This file is part of traj-exit.
#
#    traj-exit is free software: you can redistribute it and/or modify it
#    under the terms of the GNU General Public License as published by the Free
#    Software Foundation, either version 3 of the License, or (at your option)
#    any later version.
#
#    traj-exit is distributed in the hope that it will be useful, but WITHOUT
#    ANY WARRANTY; without even the implied warranty of MERCHANTABILITY or
#    FITNESS FOR A PARTICULAR PURPOSE. See the GNU General Public License for
#    more details.
#
#    You should have received a copy of the GNU General Public License along
#    with this program. If not, see <https://www.gnu.org/licenses/>.

"""Detection heads of a three-scale detector and the selections made of them."""

from dataclasses import dataclass
from enum import Enum

from .errors import SchemaError, UnknownHeadError


class Head(str, Enum):
    P3 = "P3"
    P4 = "P4"
    P5 = "P5"

    @staticmethod
    def parse(value, line=None):
        if isinstance(value, Head):
            return value
        try:
            return Head(str(value).strip().upper())
        except ValueError:
            raise UnknownHeadError(f"Unknown detection head {value!r}", line) from None


HEAD_ORDER = (Head.P3, Head.P4, Head.P5)


@dataclass(frozen=True)
class HeadSelection:
    heads: frozenset

    def __post_init__(self):
        heads = frozenset(Head.parse(h) for h in self.heads)
        if not heads:
            raise UnknownHeadError("Head selection must not be empty")
        object.__setattr__(self, "heads", heads)

    def __contains__(self, head):
        return Head.parse(head) in self.heads

    def __iter__(self):
        return (h for h in HEAD_ORDER if h in self.heads)

    def __len__(self):
        return len(self.heads)

    def issubset(self, other):
        return self.heads <= other.heads

    @property
    def is_full(self):
        return self.heads == FULL_SET.heads

    def render(self):
        """Wire form, for example ``P3`` or ``P3|P4|P5``."""
        return "|".join(h.value for h in self)

    def to_list(self):
        return [h.value for h in self]

    @staticmethod
    def parse(value):
        if isinstance(value, HeadSelection):
            return value
        if isinstance(value, str):
            value = [part for part in value.replace(",", "|").split("|") if part.strip()]
        elif not isinstance(value, (list, tuple, set, frozenset)):
            raise SchemaError(f"Head selection must be a string or a list of heads, got {value!r}")
        return HeadSelection(frozenset(Head.parse(h) for h in value))

    def __str__(self):
        return "{" + ",".join(h.value for h in self) + "}"


FULL_SET = HeadSelection(frozenset(HEAD_ORDER))
P3_ONLY = HeadSelection(frozenset({Head.P3}))
