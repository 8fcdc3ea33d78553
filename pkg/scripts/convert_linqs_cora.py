"""Convert the LINQS Cora dump (cora.cites / cora.content) to modgae's edge-list format.

Usage: python scripts/convert_linqs_cora.py CORA_DIR OUT_DIR
"""
import sys
from pathlib import Path


def main(src: str, dst: str) -> None:
    src_dir, out_dir = Path(src), Path(dst)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, labels = {}, []
    with open(src_dir / "cora.content") as fh:
        for line in fh:
            parts = line.split()
            ids[parts[0]] = len(ids)
            labels.append(parts[-1])
    with open(src_dir / "cora.cites") as fh, open(out_dir / "cora_edges.tsv", "w") as out:
        out.write(f"# n={len(ids)}\n")
        for line in fh:
            cited, citing = line.split()
            out.write(f"{ids[citing]}\t{ids[cited]}\n")
    with open(out_dir / "cora_labels.tsv", "w") as out:
        for i, lab in enumerate(labels):
            out.write(f"{i}\t{lab}\n")


if __name__ == "__main__":
    main(*sys.argv[1:3])
