from pathlib import Path

import pytest

from mcmccv.cli import build_parser
from mcmccv.errors import ConfigError, DataRequirementError
from mcmccv.method_guide import CAPABILITIES, check_requirements, lookup, method_ids, render_markdown
from mcmccv.pipeline import parse_method

DOC = Path(__file__).resolve().parents[1] / "docs" / "method_guide.md"


def test_every_cli_method_has_one_row():
    ids = [row.method for row in CAPABILITIES]
    assert len(ids) == len(set(ids))
    help_text = build_parser()._subparsers._group_actions[0].choices["estimate"].format_help()
    for m in ids:
        assert m in help_text
        parse_method(m)


def test_lookup_examples():
    cf = lookup("cf")
    assert cf.requires == {"gradients"} and cf.cost_class == "cubic_n" and cf.smooth_f_only
    ht = lookup("ht")
    assert ht.requires == {"proposals"} and ht.cost_class == "linear_n"
    with pytest.raises(ConfigError):
        lookup("magic")


def test_requirement_errors_point_to_guide(rwm_chain):
    with pytest.raises(DataRequirementError, match="Metropolis-Hastings samplers"):
        check_requirements("ht", rwm_chain.without_proposals())
    with pytest.raises(DataRequirementError, match="conditionals"):
        check_requirements("hph_bvs", rwm_chain)
    check_requirements("zvcv", rwm_chain)


def test_shipped_guide_matches_render():
    assert DOC.read_text() == render_markdown()
    for m in method_ids():
        assert f"`{m}`" in DOC.read_text()
