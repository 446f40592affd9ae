#!/usr/bin/env python3
"""Convert a GPT-2 style byte-level BPE (encoder.json + vocab.bpe) into the
plain-text tokenizer asset format read by libstatesmix (see docs/FORMAT.md).

usage: convert_gpt2_bpe.py encoder.json vocab.bpe out.bpe
"""
import json
import sys


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) \
        + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


def escape(raw: bytes) -> str:
    out = []
    for b in raw:
        if b == 0x5C:
            out.append("\\\\")
        elif 0x21 <= b <= 0x7E:
            out.append(chr(b))
        else:
            out.append("\\x%02x" % b)
    return "".join(out)


def main():
    if len(sys.argv) != 4:
        sys.exit(__doc__)
    enc_path, merges_path, out_path = sys.argv[1:]
    decoder = {u: b for b, u in bytes_to_unicode().items()}
    encoder = json.load(open(enc_path, encoding="utf-8"))
    vocab = [None] * len(encoder)
    for text, idx in encoder.items():
        vocab[idx] = bytes(decoder[ch] for ch in text) if text != "<|endoftext|>" \
            else text.encode()
    index = {v: i for i, v in enumerate(vocab)}

    merges = []
    with open(merges_path, encoding="utf-8") as f:
        for line in f:
            if line.startswith("#version") or not line.strip():
                continue
            left, right = line.rstrip("\n").split(" ")
            lb = bytes(decoder[ch] for ch in left)
            rb = bytes(decoder[ch] for ch in right)
            if lb + rb not in index:
                raise SystemExit("merge result missing from vocabulary: %r" % (lb + rb))
            merges.append((index[lb], index[rb]))

    with open(out_path, "w", encoding="ascii", newline="\n") as out:
        out.write("statesmix-bpe 1\n")
        out.write("vocab %d\n" % len(vocab))
        for entry in vocab:
            out.write(escape(entry) + "\n")
        out.write("merges %d\n" % len(merges))
        for left, right in merges:
            out.write("%d %d\n" % (left, right))


if __name__ == "__main__":
    main()
