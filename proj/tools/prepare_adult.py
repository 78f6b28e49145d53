#!/usr/bin/env python3
"""Rebuild data/adult/adult.csv from the UCI Adult training split (adult.data).

Rows containing missing values ('?') are dropped and the income label is
mapped to 0/1 (1 for '>50K').  Usage: prepare_adult.py adult.data out.csv
"""
import csv
import sys

COLUMNS = ["age", "workclass", "fnlwgt", "education", "education_num",
           "marital_status", "occupation", "relationship", "race", "sex",
           "capital_gain", "capital_loss", "hours_per_week", "native_country",
           "income"]


def main(src, dst):
    rows = []
    with open(src) as fh:
        for line in fh:
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != len(COLUMNS) or "?" in fields:
                continue
            fields[-1] = "1" if fields[-1].startswith(">50K") else "0"
            rows.append(fields)
    with open(dst, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {dst}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
