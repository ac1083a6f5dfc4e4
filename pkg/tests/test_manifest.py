import pytest

from cxrtriage import manifest


def rows_to_csv(rows):
    lines = [",".join(manifest.MANIFEST_HEADER)]
    lines += [",".join(str(c) for c in row) for row in rows]
    return "\n".join(lines) + "\n"


def entry(age, label="COVID-19", quality="true", projection="PA", path="x.pgm"):
    return (path, label, projection, age, quality)


class TestParse:
    def test_roundtrip(self):
        text = rows_to_csv([entry(40), entry(15, label="No Finding", quality="false")])
        entries = manifest.parse_manifest(text)
        assert len(entries) == 2
        assert entries[0].age == 40
        assert entries[1].quality_ok is False
        assert manifest.parse_manifest(manifest.dump_manifest(entries)) == entries

    def test_bad_header(self):
        with pytest.raises(manifest.ManifestError, match="header"):
            manifest.parse_manifest("path,label\nx,COVID-19\n")

    def test_bad_label(self):
        with pytest.raises(manifest.ManifestError, match="label"):
            manifest.parse_manifest(rows_to_csv([entry(40, label="covid")]))

    def test_bad_projection(self):
        with pytest.raises(manifest.ManifestError, match="projection"):
            manifest.parse_manifest(rows_to_csv([entry(40, projection="LAT")]))

    def test_negative_age(self):
        with pytest.raises(manifest.ManifestError, match="age"):
            manifest.parse_manifest(rows_to_csv([entry(-1)]))


class TestFilter:
    def test_age_boundary_inclusive_at_15(self):
        entries = manifest.parse_manifest(rows_to_csv([entry(14), entry(15), entry(16)]))
        kept, _ = manifest.filter_manifest(entries, min_age=15)
        assert [e.age for e in kept] == [15, 16]

    def test_quality_filter_only_when_required(self):
        entries = manifest.parse_manifest(
            rows_to_csv([entry(40, quality="false"), entry(40, quality="true")]))
        kept_lax, _ = manifest.filter_manifest(entries, require_quality=False)
        kept_strict, _ = manifest.filter_manifest(entries, require_quality=True)
        assert len(kept_lax) == 2
        assert len(kept_strict) == 1

    def test_twenty_row_fixture_keeps_thirteen(self):
        rows = []
        # 7 drops: ages 3, 9, 14 (x2 labels), and 3 poor-quality adults.
        rows += [entry(3), entry(9, label="Non-COVID-19"), entry(14),
                 entry(14, label="No Finding")]
        rows += [entry(50, quality="false"),
                 entry(60, label="Non-COVID-19", quality="false"),
                 entry(70, label="No Finding", quality="false")]
        # 13 keeps.
        rows += [entry(15), entry(16), entry(30), entry(88)]
        rows += [entry(15, label="Non-COVID-19"), entry(45, label="Non-COVID-19"),
                 entry(33, label="Non-COVID-19"), entry(21, label="Non-COVID-19")]
        rows += [entry(15, label="No Finding"), entry(19, label="No Finding"),
                 entry(52, label="No Finding"), entry(67, label="No Finding"),
                 entry(41, label="No Finding")]
        entries = manifest.parse_manifest(rows_to_csv(rows))
        assert len(entries) == 20
        kept, summary = manifest.filter_manifest(entries, min_age=15, require_quality=True)
        assert len(kept) == 13
        assert summary["COVID-19"] == (7, 4)
        assert summary["Non-COVID-19"] == (6, 4)
        assert summary["No Finding"] == (7, 5)
