"""Reference preprocessing used to pin tests/golden/preprocess.json.

Written from the pipeline's rule description, sharing only the bundled data
files with the Rust code. Run from the crate root:

    python3 tests/golden/preprocess_oracle.py > tests/golden/preprocess.json
"""

import json
import string
import sys
from pathlib import Path

DATA = Path(__file__).resolve().parents[2] / "data"

DIGITS = set("0123456789") | {chr(c) for c in range(0x0660, 0x066A)} | {chr(c) for c in range(0x06F0, 0x06FA)}
DIACRITICS = {chr(c) for c in range(0x064B, 0x0660)} | {"ٰ"}
TATWEEL = "ـ"
LETTERS = ({chr(c) for c in range(0x0621, 0x064B)} | {chr(c) for c in range(0x0671, 0x06D4)}) - {TATWEEL}
PUNCT = set(string.punctuation) | set(
    "،؛؟٪٫٬٭۔«»…–—﴾﴿"
) | {chr(c) for c in range(0x2018, 0x2020)} | {chr(c) for c in range(0x300C, 0x3010)}


def stopwords():
    lines = (DATA / "stopwords.txt").read_text(encoding="utf-8").splitlines()
    return {l.strip() for l in lines if l.strip() and not l.strip().startswith("#")}


def rules():
    out = []
    for line in (DATA / "stem_rules.tsv").read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        kind, affix, keep = line.split("\t")
        out.append((kind, affix, int(keep)))
    return out


STOP = stopwords()
RULES = rules()


def stem(tok):
    while True:
        changed = False
        for kind, affix, keep in RULES:
            if len(tok) < 4 or len(tok) < len(affix) + keep:
                continue
            if kind == "prefix" and tok.startswith(affix):
                rest = tok[len(affix):]
            elif kind == "suffix" and tok.endswith(affix):
                rest = tok[: -len(affix)]
            else:
                continue
            if rest not in STOP:
                tok, changed = rest, True
        if not changed:
            return tok


def preprocess(text):
    text = "".join(c for c in text if c not in DIGITS)
    text = "".join(c for c in text if c in LETTERS or c in DIACRITICS or c == TATWEEL or c.isspace())
    text = "".join(c for c in text if c not in PUNCT)
    text = "".join(c for c in text if c not in DIACRITICS and c != TATWEEL)
    tokens = [t for t in text.split() if t not in STOP]
    seen, out = set(), []
    for t in map(stem, tokens):
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


INPUTS = [
    "",
    "123 !!",
    "ok!",
    "...",
    "😀👍",
    "طلبت 3 مرات",
    "٢٠٢٣ سنة",
    "۱۲۳ وصلت الطلبية",
    "الطلب وصل متأخر 30 دقيقة 😡",
    "جميل 👍 nice",
    "Delivery كان سريع جدا",
    "جمــــيل جداً",
    "مَرْحَبًا بِكُمْ",
    "الخدمة ممتازة",
    "والخدمة",
    "جيد جيد جدا",
    "رائع رائع رائع!!!",
    "جيد، جدا؟",
    "«رائع»؛ ٪١٠٠",
    "في الخدمة",
    "المطعم والمطاعم والمطعمين",
    "الموظفين محترمين والموظفات",
    "سيء جدا ولن أكرر التجربة",
    "التوصيل بطيييييء",
    "هذا المنتج لا يستحق السعر",
    "أحببت الطعام كثيرا وسأعود",
    "الاسعار غالية بالنسبة للكمية",
    "كالعادة فالطلب للاسف بارد",
    "مطاعمهم نظيفة وخدماتهم ممتازة",
    "ســـــــريع ولذيذ",
    "ما شاء الله تبارك الله",
    "آلة إيجابية أداة",
    "ٱلقهوة باردة",
    "لا لا لا",
    "من و في على",
    "Hello world 2024",
    "التطبيق 🤬 سيئ جداً جداً",
    "عالم\tالقهوة\nالعربية",
    "زين",
    "بالتوفيق للجميع",
]


if __name__ == "__main__":
    cases = [{"input": t, "tokens": preprocess(t)} for t in INPUTS]
    json.dump(cases, sys.stdout, ensure_ascii=False, indent=1)
    sys.stdout.write("\n")
