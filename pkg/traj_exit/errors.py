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

"""Exception types. ``exit_code`` is the process status the CLI returns."""


class TrajExitError(Exception):
    exit_code = 1


# input / schema problems, exit status 2


class InputError(TrajExitError, ValueError):
    exit_code = 2


class SchemaError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidCoordinateError(SchemaError):
    pass


class DuplicateTimestampError(SchemaError):
    pass


class RangeError(SchemaError):
    pass


class UnknownHeadError(SchemaError):
    pass


class EmptyCorpusError(InputError):
    pass


class NotEnoughVesselsError(InputError):
    pass


class FixtureSpecError(InputError):
    pass


# semantic / coverage problems, exit status 3


class CoverageError(TrajExitError):
    exit_code = 3


class NoOverlapError(CoverageError):
    pass


class DegenerateOverlapError(CoverageError):
    pass


class OutOfCoverageError(CoverageError):
    pass


class WindowIndexError(CoverageError, IndexError):
    pass


class ProfileError(CoverageError):
    """Profile data that fails validation where consistency is required."""
