"""Static SVG overlays of a parse graph on its observations."""

import logging
import xml.etree.ElementTree as ET
from typing import Iterable

import numpy as np

from ..scene.geometry import project_points, projected_hull
from ..scene.model import Observations, ParseGraph

logger = logging.getLogger(__name__)

DETECTION_COLOR = "#1f77b4"
HULL_COLOR = "#d62728"
SYNTHESIZED_COLOR = "#ff7f0e"
SKELETON_COLOR = "#2ca02c"
DETECTED_JOINT_COLOR = "#9467bd"

JOINT_RADIUS = 3.0


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _points(uv: Iterable) -> str:
    return " ".join(f"{_fmt(u)},{_fmt(v)}" for u, v in uv)


def render_svg(pg: ParseGraph, obs: Observations) -> str:
    """Detected boxes, projected cuboid hulls and skeletons as one SVG document.

    Output depends only on the inputs, so identical inputs give identical bytes.
    """
    width, height = obs.image_size
    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": str(width),
        "height": str(height),
        "viewBox": f"0 0 {width} {height}",
    })
    ET.SubElement(svg, "rect", {"width": str(width), "height": str(height), "fill": "white"})

    detections = ET.SubElement(svg, "g", {"id": "detections"})
    for i, det in enumerate(obs.det_boxes):
        x0, y0, x1, y1 = det.box
        ET.SubElement(detections, "rect", {
            "class": "det-box", "id": f"det-{i}",
            "x": _fmt(x0), "y": _fmt(y0), "width": _fmt(x1 - x0), "height": _fmt(y1 - y0),
            "fill": "none", "stroke": DETECTION_COLOR, "stroke-dasharray": "4 2",
        })
    for i, pose in enumerate(obs.det_poses):
        for j, ((u, v), visible) in enumerate(zip(pose.joints_2d, pose.visible)):
            if visible:
                ET.SubElement(detections, "circle", {
                    "class": "det-joint", "id": f"det-pose-{i}-{j}",
                    "cx": _fmt(u), "cy": _fmt(v), "r": _fmt(JOINT_RADIUS - 1.0), "fill": DETECTED_JOINT_COLOR,
                })

    hulls = ET.SubElement(svg, "g", {"id": "objects"})
    for obj in pg.objects:
        hull = projected_hull(obs.camera, obj, obs.image_size)
        if hull is None or hull.is_empty:
            logger.debug(f"Object {obj.node_id} does not project into the image")
            continue
        ET.SubElement(hulls, "polygon", {
            "class": "hull", "id": f"hull-{obj.node_id}",
            "points": _points(hull.vertices), "fill": "none",
            "stroke": SYNTHESIZED_COLOR if obj.synthesized else HULL_COLOR,
        })

    skeletons = ET.SubElement(svg, "g", {"id": "humans"})
    for human in pg.humans:
        uv, depth = project_points(obs.camera, human.joints)
        group = ET.SubElement(skeletons, "g", {"id": f"skeleton-{human.node_id}"})
        for j, ((u, v), d) in enumerate(zip(uv, depth)):
            # joints behind the camera are parked at the origin
            if d <= 0 or not np.all(np.isfinite((u, v))):
                u, v = 0.0, 0.0
            ET.SubElement(group, "circle", {
                "class": "joint", "id": f"joint-{human.node_id}-{j}",
                "cx": _fmt(u), "cy": _fmt(v), "r": _fmt(JOINT_RADIUS), "fill": SKELETON_COLOR,
            })

    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n"
