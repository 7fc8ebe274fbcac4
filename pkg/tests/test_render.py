"""Text and SVG renderings of fuzzy policies."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from fpsrl.dynamics import mountain_car
from fpsrl.errors import ConfigurationError
from fpsrl.fuzzy import PolicyShape, policy_output
from fpsrl.render import render_rules, render_svg, render_text


def one_rule_params():
    shape = PolicyShape(state_dim=2, rule_count=1, action_scale=1.0)
    # c=(0.5, -0.25), w=(0.3, 0.4), o=0.8, alpha=2
    return shape.decode(np.array([0.5, -0.25, 0.3, 0.4, 0.8, 2.0]))


def mc_params():
    shape = PolicyShape(state_dim=2, rule_count=2, action_scale=1.0)
    x = np.array(
        [-0.6, -0.02, 0.5, 0.05, -0.9,
         0.1, 0.03, 0.5, 0.05, 0.7,
         1.5]
    )
    return shape.decode(x)


def test_text_block_structure():
    params = one_rule_params()
    text = render_text(params, ("position", "velocity"), [])
    lines = text.splitlines()
    assert lines[0].startswith("fuzzy policy: C=1 rules, D=2 inputs")
    assert "alpha=2.0000" in lines[0]
    assert lines[1] == "rule 1: o = +0.8000"
    assert lines[2].startswith("  position")
    assert lines[3].startswith("  velocity")
    assert "c=+0.5000" in lines[2]
    assert "sigma=0.3000" in lines[2]
    # profile strip is delimited by pipes and peaks at the densest glyph
    profile = lines[2].split("|")[1]
    assert len(profile) == 41
    assert "@" in profile


def test_sample_activation_at_center():
    params = one_rule_params()
    text = render_text(
        params, ("position", "velocity"), [np.array([0.5, -0.25])]
    )
    assert "rule 1 activation: 1.0000" in text
    action = policy_output(params, np.array([0.5, -0.25]))
    assert f"action: {action:+.4f}" in text


def test_mc_two_rule_listing():
    params = mc_params()
    labels = mountain_car().state_labels
    s = np.array([-1.5, -1.0])
    text = render_text(params, labels, [s])
    assert "rule 1: o = -0.9000" in text
    assert "rule 2: o = +0.7000" in text
    action = policy_output(params, s)
    assert f"action: {action:+.4f}" in text
    for label in labels:
        assert label in text


def test_text_is_deterministic():
    params = mc_params()
    labels = ("a", "b")
    samples = [np.array([0.0, 0.0])]
    assert render_text(params, labels, samples) == render_text(
        params, labels, samples
    )
    assert render_svg(params, labels, samples) == render_svg(
        params, labels, samples
    )


def test_svg_well_formed():
    params = mc_params()
    svg = render_svg(params, ("pos", "vel"), [np.array([0.1, 0.2])])
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    polylines = [e for e in root.iter() if e.tag.endswith("polyline")]
    # one membership curve per rule and input dimension
    assert len(polylines) == params.rule_count * params.state_dim
    texts = [e.text for e in root.iter() if e.tag.endswith("text")]
    assert any("action" in t for t in texts if t)


def test_render_rules_bundle():
    params = one_rule_params()
    out = render_rules(params, ("x1", "x2"))
    assert out.text.startswith("fuzzy policy")
    assert out.svg.lstrip().startswith("<svg")
    assert "sample" not in out.text


def test_label_count_validation():
    params = one_rule_params()
    with pytest.raises(ConfigurationError):
        render_rules(params, ("only",))


def test_sample_shape_validation():
    params = one_rule_params()
    with pytest.raises(ConfigurationError):
        render_rules(params, ("x1", "x2"), [np.array([1.0, 2.0, 3.0])])
