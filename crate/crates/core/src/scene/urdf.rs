//! Reader and writer for the URDF subset used to describe scenes.
//!
//! ```xml
//! <robot name="door_0">
//!   <link name="body" sample_count="2000">
//!     <visual>
//!       <origin xyz="0 0 0.5"/>
//!       <geometry><box size="0.5 0.6 1"/></geometry>
//!     </visual>
//!   </link>
//!   <link name="door"> ... </link>
//!   <joint name="hinge" type="revolute">
//!     <parent link="body"/>
//!     <child link="door"/>
//!     <origin xyz="0.25 0.3 0"/>
//!     <axis xyz="0 0 1"/>
//!     <limit lower="0" upper="2"/>
//!   </joint>
//!   <target link="door"/>
//! </robot>
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::{ArticulatedScene, ChildPart, JointSpec, JointType, Part, PartGeometry, DEFAULT_SAMPLE_COUNT};
use crate::error::{Error, Result};
use crate::geometry::{parse_triple, Vec3};

/// Strict parse: unknown elements are errors.
pub fn parse_scene(text: &str) -> Result<ArticulatedScene> {
    Parser {
        lenient: false,
        warnings: Vec::new(),
    }
    .parse(text)
}

/// Lenient parse: unknown elements are skipped and reported as warnings.
pub fn parse_scene_lenient(text: &str) -> Result<(ArticulatedScene, Vec<String>)> {
    let mut parser = Parser {
        lenient: true,
        warnings: Vec::new(),
    };
    let scene = parser.parse(text)?;
    for w in &parser.warnings {
        log::warn!("{w}");
    }
    Ok((scene, parser.warnings))
}

struct Parser {
    lenient: bool,
    warnings: Vec<String>,
}

struct RawJoint {
    parent: String,
    child: String,
    spec: JointSpec,
}

fn describe(node: Node) -> String {
    match node.attribute("name") {
        Some(name) => format!("{} name=\"{}\"", node.tag_name().name(), name),
        None => node.tag_name().name().to_string(),
    }
}

fn required_attr<'a>(node: Node<'a, '_>, attr: &str) -> Result<&'a str> {
    node.attribute(attr)
        .ok_or_else(|| Error::parse(describe(node), format!("missing attribute `{attr}`")))
}

fn triple_attr(node: Node, attr: &str) -> Result<Vec3> {
    let raw = required_attr(node, attr)?;
    parse_triple(raw).ok_or_else(|| {
        Error::parse(
            describe(node),
            format!("attribute `{attr}` must hold three finite numbers, got \"{raw}\""),
        )
    })
}

fn float_attr(node: Node, attr: &str) -> Result<f64> {
    let raw = required_attr(node, attr)?;
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(describe(node), format!("attribute `{attr}` is not a number: \"{raw}\"")))
}

impl Parser {
    fn unknown(&mut self, parent: Node, node: Node) -> Result<()> {
        let msg = format!(
            "unknown element <{}> inside <{}>",
            node.tag_name().name(),
            describe(parent)
        );
        if self.lenient {
            self.warnings.push(msg);
            Ok(())
        } else {
            Err(Error::parse(node.tag_name().name(), msg))
        }
    }

    fn parse(&mut self, text: &str) -> Result<ArticulatedScene> {
        let doc = Document::parse(text)?;
        let root = doc.root_element();
        if root.tag_name().name() != "robot" {
            return Err(Error::parse(root.tag_name().name(), "document root must be <robot>"));
        }
        let name = required_attr(root, "name")?.to_string();

        let mut links: Vec<(String, PartGeometry)> = Vec::new();
        let mut joints: Vec<RawJoint> = Vec::new();
        let mut target: Option<String> = None;

        for node in root.children().filter(Node::is_element) {
            match node.tag_name().name() {
                "link" => links.push(self.parse_link(node)?),
                "joint" => joints.push(self.parse_joint(node)?),
                "target" => {
                    if target.is_some() {
                        return Err(Error::parse("target", "more than one <target> element"));
                    }
                    target = Some(required_attr(node, "link")?.to_string());
                }
                _ => self.unknown(root, node)?,
            }
        }

        let target = target.ok_or_else(|| Error::parse("robot", "missing <target link=\"..\"/>"))?;

        let mut link_index: HashMap<&str, usize> = HashMap::new();
        for (i, (id, _)) in links.iter().enumerate() {
            if link_index.insert(id.as_str(), i).is_some() {
                return Err(Error::parse(format!("link name=\"{id}\""), "duplicate link name"));
            }
        }

        let mut joint_of_child: HashMap<&str, usize> = HashMap::new();
        for (ji, j) in joints.iter().enumerate() {
            let element = format!("joint name=\"{}\"", j.spec.name);
            for l in [&j.parent, &j.child] {
                if !link_index.contains_key(l.as_str()) {
                    return Err(Error::parse(element, format!("unknown link `{l}`")));
                }
            }
            if j.parent == j.child {
                return Err(Error::parse(element, "parent and child are the same link"));
            }
            if joint_of_child.insert(j.child.as_str(), ji).is_some() {
                return Err(Error::parse(
                    element,
                    format!("link `{}` is the child of more than one joint", j.child),
                ));
            }
        }
        for j in &joints {
            if joint_of_child.contains_key(j.parent.as_str()) {
                return Err(Error::parse(
                    format!("joint name=\"{}\"", j.spec.name),
                    format!(
                        "parent `{}` is itself jointed; only depth-1 chains are supported",
                        j.parent
                    ),
                ));
            }
        }

        let mut base_parts = Vec::new();
        let mut child_parts = Vec::new();
        for (id, geometry) in &links {
            match joint_of_child.get(id.as_str()) {
                Some(&ji) => {
                    let j = &joints[ji];
                    child_parts.push(ChildPart {
                        id: id.clone(),
                        parent: j.parent.clone(),
                        geometry: geometry.clone(),
                        joint: j.spec.clone(),
                    });
                }
                None => base_parts.push(Part {
                    id: id.clone(),
                    geometry: geometry.clone(),
                }),
            }
        }

        let scene = ArticulatedScene {
            name,
            base_parts,
            child_parts,
            target_part: target,
        };
        scene.validate()?;
        Ok(scene)
    }

    fn parse_link(&mut self, node: Node) -> Result<(String, PartGeometry)> {
        let id = required_attr(node, "name")?.to_string();
        let sample_count = match node.attribute("sample_count") {
            Some(raw) => raw.trim().parse::<usize>().map_err(|_| {
                Error::parse(
                    describe(node),
                    format!("sample_count is not a positive integer: \"{raw}\""),
                )
            })?,
            None => DEFAULT_SAMPLE_COUNT,
        };
        let mut center = None;
        let mut size = None;
        for child in node.children().filter(Node::is_element) {
            match child.tag_name().name() {
                "visual" => {
                    if size.is_some() {
                        return Err(Error::parse(describe(node), "more than one <visual>"));
                    }
                    for v in child.children().filter(Node::is_element) {
                        match v.tag_name().name() {
                            "origin" => center = Some(triple_attr(v, "xyz")?),
                            "geometry" => {
                                for g in v.children().filter(Node::is_element) {
                                    match g.tag_name().name() {
                                        "box" => size = Some(triple_attr(g, "size")?),
                                        _ => self.unknown(v, g)?,
                                    }
                                }
                            }
                            _ => self.unknown(child, v)?,
                        }
                    }
                }
                _ => self.unknown(node, child)?,
            }
        }
        let size = size.ok_or_else(|| Error::parse(describe(node), "missing <visual><geometry><box/>"))?;
        let geometry = PartGeometry::new(center.unwrap_or_else(Vec3::zeros), size, sample_count)
            .map_err(|e| Error::parse(describe(node), e.to_string()))?;
        Ok((id, geometry))
    }

    fn parse_joint(&mut self, node: Node) -> Result<RawJoint> {
        let name = required_attr(node, "name")?.to_string();
        let element = describe(node);
        let joint_type = match required_attr(node, "type")? {
            "revolute" => JointType::Revolute,
            "prismatic" => JointType::Prismatic,
            other => {
                return Err(Error::parse(
                    element,
                    format!("unknown joint type `{other}` (expected revolute or prismatic)"),
                ))
            }
        };
        let mut parent = None;
        let mut child = None;
        let mut origin = None;
        let mut axis = None;
        let mut limits = None;
        for c in node.children().filter(Node::is_element) {
            match c.tag_name().name() {
                "parent" => parent = Some(required_attr(c, "link")?.to_string()),
                "child" => child = Some(required_attr(c, "link")?.to_string()),
                "origin" => origin = Some(triple_attr(c, "xyz")?),
                "axis" => axis = Some(triple_attr(c, "xyz")?),
                "limit" => limits = Some((float_attr(c, "lower")?, float_attr(c, "upper")?)),
                _ => self.unknown(node, c)?,
            }
        }
        let parent = parent.ok_or_else(|| Error::parse(element.clone(), "missing <parent link>"))?;
        let child = child.ok_or_else(|| Error::parse(element.clone(), "missing <child link>"))?;
        let axis = axis.ok_or_else(|| Error::parse(element.clone(), "missing <axis xyz>"))?;
        let (lower, upper) =
            limits.ok_or_else(|| Error::parse(element.clone(), "movable joint requires <limit lower upper>"))?;
        let spec = JointSpec::new(name, joint_type, axis, origin.unwrap_or_else(Vec3::zeros), lower, upper)?;
        Ok(RawJoint { parent, child, spec })
    }
}

fn fmt3(v: &Vec3) -> String {
    format!("{} {} {}", v.x, v.y, v.z)
}

fn write_link(out: &mut String, id: &str, g: &PartGeometry) {
    let _ = writeln!(out, "  <link name=\"{id}\" sample_count=\"{}\">", g.sample_count);
    let _ = writeln!(out, "    <visual>");
    let _ = writeln!(out, "      <origin xyz=\"{}\"/>", fmt3(&g.center));
    let _ = writeln!(out, "      <geometry><box size=\"{}\"/></geometry>", fmt3(&g.size));
    let _ = writeln!(out, "    </visual>");
    let _ = writeln!(out, "  </link>");
}

/// Writes a scene back out. Floats use the shortest representation that
/// parses back to the same bits, so `parse(serialize(s)) == s`.
pub fn serialize_scene(scene: &ArticulatedScene) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<robot name=\"{}\">", scene.name);
    for p in &scene.base_parts {
        write_link(&mut out, &p.id, &p.geometry);
    }
    for c in &scene.child_parts {
        write_link(&mut out, &c.id, &c.geometry);
    }
    for c in &scene.child_parts {
        let j = &c.joint;
        let _ = writeln!(out, "  <joint name=\"{}\" type=\"{}\">", j.name, j.joint_type.as_str());
        let _ = writeln!(out, "    <parent link=\"{}\"/>", c.parent);
        let _ = writeln!(out, "    <child link=\"{}\"/>", c.id);
        let _ = writeln!(out, "    <origin xyz=\"{}\"/>", fmt3(&j.origin));
        let _ = writeln!(out, "    <axis xyz=\"{}\"/>", fmt3(&j.axis));
        let _ = writeln!(out, "    <limit lower=\"{}\" upper=\"{}\"/>", j.lower, j.upper);
        let _ = writeln!(out, "  </joint>");
    }
    let _ = writeln!(out, "  <target link=\"{}\"/>", scene.target_part);
    out.push_str("</robot>\n");
    out
}
