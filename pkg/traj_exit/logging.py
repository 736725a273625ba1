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


import logging
import os
import sys
from logging.handlers import RotatingFileHandler

# module name prefixes per filter category
LOG_CATEGORIES = {
    "geo": ["geo_motion"],
    "ingest": ["ingest"],
    "policy": ["policy"],
    "planner": ["lr_planner"],
    "cost": ["cost_model"],
    "sim": ["sim", "fixtures"],
    "cli": ["cli"],
}

LEVELS = {
    "CRITICAL": logging.CRITICAL,
    "ERROR": logging.ERROR,
    "WARNING": logging.WARNING,
    "INFO": logging.INFO,
    "DEBUG": logging.DEBUG,
}


def level_from_env(default=logging.ERROR):
    value = os.environ.get("TRAJ_EXIT_LOG", "").strip()
    if not value:
        return default
    if value.isdigit():
        return int(value)
    return LEVELS.get(value.upper(), default)


class TE_Log:
    log = logging.getLogger("trajExit")
    log.addHandler(logging.NullHandler())
    categories = set()

    @staticmethod
    def enable(level=None):
        log = TE_Log.log
        log.setLevel(level if level is not None else level_from_env())

        class CustomStreamHandler(logging.StreamHandler):
            # resolved per record so a replaced sys.stderr is honored
            @property
            def stream(self):
                return sys.stderr

            @stream.setter
            def stream(self, value):
                pass

            def emit(self, record):
                super().emit(record)
                # keep interleaving with CLI output readable
                self.flush()

        log_formatter = logging.Formatter(
            fmt="%(asctime)s.%(msecs)03d %(levelname)s %(module)s - %(funcName)s %(lineno)d: %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
        # logger is global, prevent duplicate registrations
        if not any(isinstance(h, logging.StreamHandler) for h in log.handlers):
            console_log_handler = CustomStreamHandler()
            console_log_handler.setFormatter(log_formatter)
            log.addHandler(console_log_handler)

            path = os.environ.get("TRAJ_EXIT_LOG_FILE")
            if path:
                file_log_handler = RotatingFileHandler(
                    path, backupCount=5, maxBytes=8000000, encoding="utf-8", mode="a"
                )
                file_log_handler.setFormatter(log_formatter)
                log.addHandler(file_log_handler)
        TE_Log.update_filters()

    @staticmethod
    def set_level(level):
        TE_Log.log.critical(f"Update logging level to {level}")
        TE_Log.log.setLevel(level)

    @staticmethod
    def update_filters():
        log = TE_Log.log
        raw = os.environ.get("TRAJ_EXIT_LOG_FILTER", "")
        TE_Log.categories = {c.strip() for c in raw.split(",") if c.strip()}
        for filter in list(log.filters):
            log.removeFilter(filter)
        unknown = TE_Log.categories - set(LOG_CATEGORIES)
        if unknown:
            log.warning(f"Unknown log filter categories: {sorted(unknown)}")

        def custom_filter(record):
            if not TE_Log.categories:
                return True
            for category in TE_Log.categories:
                modules = LOG_CATEGORIES.get(category, [])
                if any(record.module == m for m in modules):
                    return True
            return False

        log.addFilter(custom_filter)
