#!/usr/bin/python

from __future__ import absolute_import, division, print_function, \
    with_statement
