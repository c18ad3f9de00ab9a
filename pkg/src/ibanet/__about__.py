# SPDX-FileCopyrightText: 2023-present Patrick Sadil <psadil@gmail.com>
#
# SPDX-License-Identifier: MIT
__version__ = "0.1.0"
