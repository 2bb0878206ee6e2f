//! XML export and import of method models.
//!
//! The element grammar is documented in `docs/method-xml.md`. Export is a
//! pure function of the method and metamodel; import rebuilds everything
//! the document does not carry (situation notes, carried relationships,
//! canonical ordering) from the metamodel, so
//! `import_xml(export_xml(m)) == m` for every canonical, conforming `m`.

use std::borrow::Cow;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use quick_xml::escape::{escape, partial_escape, resolve_predefined_entity};
use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{parse_document, write_document, FORMAT_VERSION};
use crate::conformance::{check_conformance, has_errors, ValidationIssue};
use crate::engine::{carried_relationships, inclusion_note};
use crate::error::CatalogError;
use crate::metamodel::{
    format_migration_types, illegal_xml_char, parse_migration_types, FragmentInclusion, FragmentKind, Metamodel,
    MethodFragment, MethodModel, Provenance, SequenceEdge, TechniqueBinding, Waiver,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterchangeError {
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("document targets metamodel version {found}, loaded metamodel is version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("method has {} error-severity issue(s)", .0.len())]
    Integrity(Vec<ValidationIssue>),
}

impl InterchangeError {
    pub fn code(&self) -> &'static str {
        match self {
            InterchangeError::Parse { .. } => "PARSE_ERROR",
            InterchangeError::VersionMismatch { .. } => "VERSION_MISMATCH",
            InterchangeError::Integrity(_) => "INTEGRITY_ERROR",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImportOptions {
    /// Bind to the given metamodel even when `metamodel-version` differs.
    pub force_version: bool,
}

fn attr_text(s: &str) -> String {
    // Literal whitespace in attribute values is normalized away by
    // conforming readers, so it goes out as character references.
    escape(s)
        .replace('\t', "&#9;")
        .replace('\n', "&#10;")
        .replace('\r', "&#13;")
}

fn element_text(s: &str) -> String {
    partial_escape(s).replace('\r', "&#13;")
}

struct Out {
    buf: String,
}

impl Out {
    fn open(&mut self, depth: usize, name: &str, attrs: &[(&str, &str)], empty: bool) {
        let _ = write!(self.buf, "{:width$}<{name}", "", width = depth * 2);
        for (k, v) in attrs {
            let _ = write!(self.buf, " {k}=\"{}\"", attr_text(v));
        }
        self.buf.push_str(if empty { "/>\n" } else { ">\n" });
    }

    fn close(&mut self, depth: usize, name: &str) {
        let _ = writeln!(self.buf, "{:width$}</{name}>", "", width = depth * 2);
    }

    fn text(&mut self, depth: usize, name: &str, text: &str) {
        let _ = writeln!(
            self.buf,
            "{:width$}<{name}>{}</{name}>",
            "",
            element_text(text),
            width = depth * 2
        );
    }
}

/// Serializes a conforming method. Methods with Error-severity issues are
/// refused.
pub fn export_xml(method: &MethodModel, metamodel: &Metamodel) -> Result<Vec<u8>, InterchangeError> {
    let issues = check_conformance(method, metamodel);
    if has_errors(&issues) {
        return Err(InterchangeError::Integrity(issues));
    }
    let mut out = Out {
        buf: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
    };
    let version = method.metamodel_version.to_string();
    let types = format_migration_types(&method.migration_types);
    out.open(
        0,
        "method",
        &[
            ("id", &method.id),
            ("name", &method.name),
            ("metamodel-version", &version),
            ("migration-types", &types),
        ],
        false,
    );
    if !method.description.is_empty() {
        out.text(1, "description", &method.description);
    }
    for phase_id in &method.phases {
        let phase_name = metamodel
            .fragment(phase_id)
            .map_or(phase_id.as_str(), |p| p.name.as_str());
        let in_phase =
            |id: &str| method.resolve(metamodel, id).and_then(|f| f.phase.as_deref()) == Some(phase_id.as_str());
        let members: Vec<&FragmentInclusion> = method.members.iter().filter(|m| in_phase(&m.fragment)).collect();
        let waivers: Vec<&Waiver> = method.waivers.iter().filter(|w| in_phase(&w.fragment)).collect();
        let attrs = [("id", phase_id.as_str()), ("name", phase_name)];
        if members.is_empty() && waivers.is_empty() {
            out.open(1, "phase", &attrs, true);
            continue;
        }
        out.open(1, "phase", &attrs, false);
        for m in members {
            let f = method
                .resolve(metamodel, &m.fragment)
                .expect("conforming members resolve");
            let mut attrs = vec![
                ("id", f.id.as_str()),
                ("name", f.name.as_str()),
                ("kind", f.kind.as_str()),
                ("provenance", f.provenance.as_str()),
            ];
            if let Some(parent) = f.parent.as_deref() {
                attrs.push(("parent", parent));
            }
            out.open(2, "fragment", &attrs, false);
            out.text(
                3,
                "definition",
                method.definition_of(metamodel, &f.id).unwrap_or_default(),
            );
            for b in method.bindings_for(&f.id) {
                let name = metamodel
                    .fragment(&b.technique)
                    .map_or(b.technique.as_str(), |t| t.name.as_str());
                out.open(3, "technique", &[("id", &b.technique), ("name", name)], true);
            }
            out.close(2, "fragment");
        }
        for w in waivers {
            let f = metamodel.fragment(&w.fragment).expect("conforming waivers resolve");
            out.open(
                2,
                "fragment",
                &[
                    ("id", f.id.as_str()),
                    ("name", f.name.as_str()),
                    ("kind", f.kind.as_str()),
                    ("provenance", f.provenance.as_str()),
                ],
                false,
            );
            out.text(3, "waiver", &w.justification);
            out.close(2, "fragment");
        }
        out.close(1, "phase");
    }
    if method.sequences.is_empty() {
        out.open(1, "sequences", &[], true);
    } else {
        out.open(1, "sequences", &[], false);
        for e in &method.sequences {
            out.open(2, "edge", &[("from", &e.from), ("to", &e.to)], true);
        }
        out.close(1, "sequences");
    }
    out.close(0, "method");
    Ok(out.buf.into_bytes())
}

/// A parsed element: name, attributes, element children and accumulated
/// character data.
#[derive(Debug)]
struct Node {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Node>,
    text: String,
    offset: usize,
}

struct Parser<'a> {
    source: &'a str,
}

impl Parser<'_> {
    fn error_at(&self, offset: usize, message: impl Into<String>) -> InterchangeError {
        let offset = offset.min(self.source.len());
        let mut cut = offset;
        while !self.source.is_char_boundary(cut) {
            cut -= 1;
        }
        let before = &self.source[..cut];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        InterchangeError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    /// Rejects text that decodes to characters XML cannot carry.
    fn legal(&self, text: &str, offset: usize) -> Result<(), InterchangeError> {
        match illegal_xml_char(text) {
            Some(c) => Err(self.error_at(offset, format!("character U+{:04X} is not allowed in XML", c as u32))),
            None => Ok(()),
        }
    }

    fn element(&self, start: &BytesStart<'_>, offset: usize) -> Result<Node, InterchangeError> {
        let name = start.name().as_ref().to_string();
        let mut attrs = Vec::new();
        for a in start.attributes() {
            let a = a.map_err(|e| self.error_at(offset, e.to_string()))?;
            let key = a.key.as_ref().to_string();
            let value = a
                .normalized_value(XmlVersion::Implicit1_0)
                .map_err(|e| self.error_at(offset, e.to_string()))?
                .into_owned();
            self.legal(&value, offset)?;
            attrs.push((key, value));
        }
        Ok(Node {
            name,
            attrs,
            children: Vec::new(),
            text: String::new(),
            offset,
        })
    }

    fn tree(&self) -> Result<Node, InterchangeError> {
        let mut reader = Reader::from_str(self.source);
        let mut stack: Vec<Node> = Vec::new();
        let mut root = None;
        loop {
            let offset = reader.buffer_position() as usize;
            let event = reader
                .read_event()
                .map_err(|e| self.error_at(reader.error_position() as usize, e.to_string()))?;
            let in_root = |stack: &Vec<Node>| !stack.is_empty();
            match event {
                Event::Decl(_) | Event::Comment(_) => {}
                Event::PI(_) | Event::DocType(_) => {
                    return Err(self.error_at(offset, "processing instructions and DTDs are not allowed"))
                }
                Event::Start(s) => {
                    if root.is_some() {
                        return Err(self.error_at(offset, "content after the root element"));
                    }
                    stack.push(self.element(&s, offset)?);
                }
                Event::Empty(s) => {
                    if root.is_some() {
                        return Err(self.error_at(offset, "content after the root element"));
                    }
                    let node = self.element(&s, offset)?;
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(node),
                        None => root = Some(node),
                    }
                }
                Event::End(_) => {
                    let node = stack.pop().expect("reader checks end tags");
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(node),
                        None => root = Some(node),
                    }
                }
                Event::Text(t) => {
                    let text = t.xml10_content();
                    match stack.last_mut() {
                        Some(node) => node.text.push_str(&text),
                        None if text.trim().is_empty() => {}
                        None => return Err(self.error_at(offset, "text outside the root element")),
                    }
                }
                Event::CData(c) => {
                    if !in_root(&stack) {
                        return Err(self.error_at(offset, "CDATA outside the root element"));
                    }
                    let text = c.xml10_content();
                    stack.last_mut().expect("checked").text.push_str(&text);
                }
                Event::GeneralRef(r) => {
                    let resolved: Cow<'_, str> = match r.resolve_char_ref() {
                        Ok(Some(c)) => {
                            let c = c.to_string();
                            self.legal(&c, offset)?;
                            c.into()
                        }
                        Ok(None) => match resolve_predefined_entity(&r) {
                            Some(s) => s.into(),
                            None => return Err(self.error_at(offset, format!("unknown entity `&{};`", &*r))),
                        },
                        Err(e) => return Err(self.error_at(offset, e.to_string())),
                    };
                    match stack.last_mut() {
                        Some(node) => node.text.push_str(&resolved),
                        None => return Err(self.error_at(offset, "reference outside the root element")),
                    }
                }
                Event::Eof => {
                    if !stack.is_empty() {
                        return Err(self.error_at(offset, "unexpected end of document"));
                    }
                    return root.ok_or_else(|| self.error_at(offset, "document has no root element"));
                }
            }
        }
    }
}

impl Node {
    fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

struct Binder<'a> {
    parser: Parser<'a>,
    metamodel: &'a Metamodel,
}

impl Binder<'_> {
    fn fail(&self, node: &Node, message: impl Into<String>) -> InterchangeError {
        self.parser.error_at(node.offset, message)
    }

    /// Checks the attribute set against the grammar and returns the values
    /// of `required` in order.
    fn attrs<'n>(
        &self,
        node: &'n Node,
        required: &[&str],
        optional: &[&str],
    ) -> Result<Vec<&'n str>, InterchangeError> {
        for (k, _) in &node.attrs {
            if !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
                return Err(self.fail(node, format!("unexpected attribute `{k}` on <{}>", node.name)));
            }
        }
        required
            .iter()
            .map(|k| {
                node.attr(k)
                    .ok_or_else(|| self.fail(node, format!("<{}> is missing attribute `{k}`", node.name)))
            })
            .collect()
    }

    fn no_text(&self, node: &Node) -> Result<(), InterchangeError> {
        if node.text.trim().is_empty() {
            Ok(())
        } else {
            Err(self.fail(node, format!("unexpected text inside <{}>", node.name)))
        }
    }

    fn leaf<'n>(&self, node: &'n Node) -> Result<&'n str, InterchangeError> {
        self.attrs(node, &[], &[])?;
        if let Some(child) = node.children.first() {
            return Err(self.fail(
                child,
                format!("unexpected element <{}> inside <{}>", child.name, node.name),
            ));
        }
        Ok(&node.text)
    }

    fn empty(&self, node: &Node) -> Result<(), InterchangeError> {
        self.no_text(node)?;
        match node.children.first() {
            Some(child) => Err(self.fail(child, format!("<{}> must be empty", node.name))),
            None => Ok(()),
        }
    }

    fn method(&self, root: &Node, options: ImportOptions) -> Result<MethodModel, InterchangeError> {
        if root.name != "method" {
            return Err(self.fail(root, format!("root element must be <method>, found <{}>", root.name)));
        }
        let a = self.attrs(root, &["id", "name", "metamodel-version", "migration-types"], &[])?;
        let (id, name) = (a[0], a[1]);
        let found: u32 = a[2]
            .parse()
            .map_err(|_| self.fail(root, format!("invalid metamodel-version `{}`", a[2])))?;
        if found != self.metamodel.version() && !options.force_version {
            return Err(InterchangeError::VersionMismatch {
                found,
                expected: self.metamodel.version(),
            });
        }
        let migration_types = if a[3].trim().is_empty() {
            BTreeSet::new()
        } else {
            parse_migration_types(a[3]).map_err(|e| self.fail(root, e.to_string()))?
        };
        self.no_text(root)?;

        let mut method = MethodModel {
            id: id.to_string(),
            name: name.to_string(),
            description: String::new(),
            migration_types,
            phases: Vec::new(),
            members: Vec::new(),
            user_fragments: Vec::new(),
            relationships: Vec::new(),
            sequences: Vec::new(),
            technique_bindings: BTreeSet::new(),
            metamodel_version: self.metamodel.version(),
            waivers: Vec::new(),
        };

        let mut children = root.children.iter().peekable();
        if let Some(d) = children.next_if(|c| c.name == "description") {
            method.description = self.leaf(d)?.to_string();
        }
        while let Some(p) = children.next_if(|c| c.name == "phase") {
            self.phase(p, &mut method)?;
        }
        match children.next() {
            Some(s) if s.name == "sequences" => self.sequences(s, &mut method)?,
            Some(other) => return Err(self.fail(other, format!("unexpected element <{}> inside <method>", other.name))),
            None => return Err(self.fail(root, "<method> is missing <sequences>")),
        }
        if let Some(extra) = children.next() {
            return Err(self.fail(extra, format!("unexpected element <{}> after <sequences>", extra.name)));
        }

        for m in &mut method.members {
            m.note = inclusion_note(self.metamodel, &method.migration_types, &m.fragment);
        }
        method.normalize(self.metamodel);
        method.relationships = carried_relationships(self.metamodel, &method);
        Ok(method)
    }

    fn phase(&self, node: &Node, method: &mut MethodModel) -> Result<(), InterchangeError> {
        let a = self.attrs(node, &["id", "name"], &[])?;
        let phase_id = a[0];
        match self.metamodel.fragment(phase_id) {
            Some(f) if f.kind == FragmentKind::Phase => {}
            _ => return Err(self.fail(node, format!("`{phase_id}` is not a catalog phase"))),
        }
        self.no_text(node)?;
        method.phases.push(phase_id.to_string());
        for child in &node.children {
            if child.name != "fragment" {
                return Err(self.fail(child, format!("unexpected element <{}> inside <phase>", child.name)));
            }
            self.fragment(child, phase_id, method)?;
        }
        Ok(())
    }

    fn fragment(&self, node: &Node, phase: &str, method: &mut MethodModel) -> Result<(), InterchangeError> {
        let a = self.attrs(node, &["id", "name", "kind", "provenance"], &["parent"])?;
        let (id, name) = (a[0], a[1]);
        let kind: FragmentKind = a[2]
            .parse()
            .map_err(|e: crate::error::ParseValueError| self.fail(node, e.to_string()))?;
        let _: Provenance = a[3]
            .parse()
            .map_err(|e: crate::error::ParseValueError| self.fail(node, e.to_string()))?;
        let parent = node.attr("parent");
        self.no_text(node)?;

        let mut children = node.children.iter().peekable();
        if let Some(w) = children.next_if(|c| c.name == "waiver") {
            if let Some(extra) = children.next() {
                return Err(self.fail(extra, "a waived fragment carries only its <waiver>"));
            }
            method.waivers.push(Waiver {
                fragment: id.to_string(),
                justification: self.leaf(w)?.to_string(),
            });
            return Ok(());
        }
        let definition = match children.next() {
            Some(d) if d.name == "definition" => self.leaf(d)?.to_string(),
            Some(other) => {
                return Err(self.fail(other, format!("unexpected element <{}> inside <fragment>", other.name)))
            }
            None => return Err(self.fail(node, "<fragment> is missing <definition>")),
        };
        for child in children {
            if child.name != "technique" {
                return Err(self.fail(child, format!("unexpected element <{}> inside <fragment>", child.name)));
            }
            let t = self.attrs(child, &["id", "name"], &[])?;
            self.empty(child)?;
            method.technique_bindings.insert(TechniqueBinding::new(id, t[0]));
        }

        match self.metamodel.fragment(id) {
            Some(catalog) => method.members.push(FragmentInclusion {
                fragment: id.to_string(),
                definition_override: (definition != catalog.definition).then_some(definition),
                note: None,
            }),
            None => {
                method.members.push(FragmentInclusion::new(id));
                method.user_fragments.push(MethodFragment {
                    id: id.to_string(),
                    name: name.to_string(),
                    kind,
                    definition,
                    phase: Some(phase.to_string()),
                    provenance: Provenance::UserDefined,
                    parent: parent.map(String::from),
                    provenance_note: None,
                });
            }
        }
        Ok(())
    }

    fn sequences(&self, node: &Node, method: &mut MethodModel) -> Result<(), InterchangeError> {
        self.attrs(node, &[], &[])?;
        self.no_text(node)?;
        for e in &node.children {
            if e.name != "edge" {
                return Err(self.fail(e, format!("unexpected element <{}> inside <sequences>", e.name)));
            }
            let a = self.attrs(e, &["from", "to"], &[])?;
            self.empty(e)?;
            method.sequences.push(SequenceEdge::new(a[0], a[1]));
        }
        Ok(())
    }
}

pub fn import_xml(doc: &[u8], metamodel: &Metamodel) -> Result<MethodModel, InterchangeError> {
    import_xml_with(doc, metamodel, ImportOptions::default())
}

/// Parses a method document strictly: unknown elements and attributes are
/// rejected. Catalog ids bind to catalog fragments; other ids become
/// user-defined members of the enclosing phase.
pub fn import_xml_with(
    doc: &[u8],
    metamodel: &Metamodel,
    options: ImportOptions,
) -> Result<MethodModel, InterchangeError> {
    let source = match std::str::from_utf8(doc) {
        Ok(s) => s,
        Err(e) => {
            let valid = std::str::from_utf8(&doc[..e.valid_up_to()]).expect("valid prefix");
            return Err(Parser { source: valid }.error_at(valid.len(), "document is not UTF-8"));
        }
    };
    let parser = Parser { source };
    if let Some(c) = illegal_xml_char(source) {
        let at = source.find(c).expect("found above");
        return Err(parser.error_at(at, format!("character U+{:04X} is not allowed in XML", c as u32)));
    }
    let root = parser.tree()?;
    Binder { parser, metamodel }.method(&root, options)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct MethodRecords {
    format_version: u32,
    method: MethodModel,
}

/// Structured-text rendering of a method in the catalog grammar. This is a
/// convenience for scripting; the XML form is the interchange contract.
pub fn export_records(method: &MethodModel) -> Vec<u8> {
    write_document(&MethodRecords {
        format_version: FORMAT_VERSION,
        method: method.clone(),
    })
}

pub fn import_records(source: &[u8]) -> Result<MethodModel, CatalogError> {
    let doc: MethodRecords = parse_document(source)?;
    if doc.format_version != FORMAT_VERSION {
        return Err(CatalogError::Parse(format!(
            "unsupported format-version {}",
            doc.format_version
        )));
    }
    let m = &doc.method;
    let text = [&m.id, &m.name, &m.description]
        .into_iter()
        .chain(&m.phases)
        .chain(
            m.members
                .iter()
                .flat_map(|i| std::iter::once(&i.fragment).chain(&i.definition_override)),
        )
        .chain(
            m.user_fragments
                .iter()
                .flat_map(|f| [&f.id, &f.name, &f.definition].into_iter().chain(&f.parent)),
        )
        .chain(m.waivers.iter().flat_map(|w| [&w.fragment, &w.justification]))
        .chain(m.sequences.iter().flat_map(|e| [&e.from, &e.to]));
    for t in text {
        if let Some(c) = illegal_xml_char(t) {
            return Err(CatalogError::Parse(format!(
                "character U+{:04X} cannot be stored in a method",
                c as u32
            )));
        }
    }
    Ok(doc.method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::shipped_catalog;
    use crate::engine::instantiate;
    use crate::metamodel::MigrationType;
    use crate::tailoring::{replay, TailoringAction};

    fn tailored() -> (Metamodel, MethodModel) {
        let mm = shipped_catalog();
        let base = instantiate(
            &mm,
            "Hackystat <SaaS> & \"friends\"",
            &[MigrationType::II].into(),
            &["plan", "design", "enable", "maintain"],
        )
        .unwrap();
        let actions = vec![
            TailoringAction::BindTechnique {
                task: "enable-elasticity".into(),
                technique: "hybrid-scaling".into(),
            },
            TailoringAction::ExtendFragment {
                parent: "define-plan".into(),
                name: "Plan\tmigration".into(),
                id: None,
                definition: "  line one\r\nline two\rthree & <four>  ".into(),
            },
            TailoringAction::RemoveFragment {
                id: "isolate-tenant-data".into(),
                waiver: Some("single \"tenant\"\nonly".into()),
            },
            TailoringAction::EditDefinition {
                id: "test-security".into(),
                definition: "".into(),
            },
            TailoringAction::SetSequence {
                edges: vec![SequenceEdge::new("define-plan", "plan-migration-u1")],
            },
        ];
        let m = replay(&base, &mm, &actions).unwrap().method;
        (mm, m)
    }

    #[test]
    fn round_trip_preserves_the_method() {
        let (mm, m) = tailored();
        let bytes = export_xml(&m, &mm).unwrap();
        let back = import_xml(&bytes, &mm).unwrap();
        assert_eq!(back, m);
        assert_eq!(export_xml(&back, &mm).unwrap(), bytes);
    }

    #[test]
    fn document_shape() {
        let (mm, m) = tailored();
        let text = String::from_utf8(export_xml(&m, &mm).unwrap()).unwrap();
        assert!(text.starts_with("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<method id="));
        assert!(text.contains("  <phase id=\"plan\" name=\"Plan\">\n"));
        assert!(text.contains("<technique id=\"hybrid-scaling\" name=\"Hybrid scaling\"/>"));
        assert!(text.contains("<definition></definition>"));
        assert!(text.contains("<waiver>single \"tenant\"\nonly</waiver>"));
        assert!(text.contains("provenance=\"UserDefined\" parent=\"define-plan\""));
        assert!(text.ends_with("  </sequences>\n</method>\n"));
    }

    #[test]
    fn empty_method_exports_empty_phases() {
        let mm = shipped_catalog();
        let mut m = instantiate(&mm, "e", &[MigrationType::V].into(), &["plan"]).unwrap();
        m.members.clear();
        m.sequences.clear();
        m.relationships = carried_relationships(&mm, &m);
        let text = String::from_utf8(export_xml(&m, &mm).unwrap()).unwrap();
        assert!(text.contains("<phase id=\"plan\" name=\"Plan\"/>"));
        assert!(text.contains("<sequences/>"));
        let back = import_xml(text.as_bytes(), &mm).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn errors_carry_positions() {
        let mm = shipped_catalog();
        match import_xml(b"<method id=\"x\"", &mm) {
            Err(InterchangeError::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let doc = "<?xml version=\"1.0\"?>\n<method id=\"m\" name=\"m\" metamodel-version=\"1\" migration-types=\"V\">\n  <bogus/>\n</method>\n";
        match import_xml(doc.as_bytes(), &mm) {
            Err(InterchangeError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
        let doc = "<method id=\"m\" name=\"m\" metamodel-version=\"1\" migration-types=\"V\" colour=\"red\"><sequences/></method>";
        assert!(matches!(
            import_xml(doc.as_bytes(), &mm),
            Err(InterchangeError::Parse { .. })
        ));
        assert!(matches!(import_xml(b"\xff", &mm), Err(InterchangeError::Parse { .. })));
        let head = "<method id=\"m\" name=\"m\" metamodel-version=\"1\" migration-types=\"V\">\n";
        for body in [
            "<description>a\u{1}b</description>",
            "<description>a&#1;b</description>",
        ] {
            let doc = format!("{head}{body}<sequences/></method>");
            match import_xml(doc.as_bytes(), &mm) {
                Err(InterchangeError::Parse { line: 2, message, .. }) => {
                    assert!(message.contains("U+0001"), "{message}")
                }
                other => panic!("{body}: {other:?}"),
            }
        }
        let doc = "<method id=\"m\" name=\"a&#2;\" metamodel-version=\"1\" migration-types=\"V\"><sequences/></method>";
        assert!(matches!(
            import_xml(doc.as_bytes(), &mm),
            Err(InterchangeError::Parse { .. })
        ));
        assert!(matches!(import_xml(b"", &mm), Err(InterchangeError::Parse { .. })));
    }

    #[test]
    fn version_mismatch_can_be_forced() {
        let mm = shipped_catalog();
        let doc = "<method id=\"m\" name=\"m\" metamodel-version=\"9\" migration-types=\"V\"><phase id=\"plan\" name=\"Plan\"/><sequences/></method>";
        assert_eq!(
            import_xml(doc.as_bytes(), &mm),
            Err(InterchangeError::VersionMismatch { found: 9, expected: 1 })
        );
        let m = import_xml_with(doc.as_bytes(), &mm, ImportOptions { force_version: true }).unwrap();
        assert_eq!(m.metamodel_version, 1);
        assert_eq!(m.phases, vec!["plan"]);
    }

    #[test]
    fn unmatched_ids_become_user_fragments() {
        let mm = shipped_catalog();
        let doc = r#"<method id="m" name="m" metamodel-version="1" migration-types="V">
  <phase id="plan" name="Plan">
    <fragment id="define-plan" name="Define plan" kind="Task" provenance="Catalog">
      <definition>Local text</definition>
    </fragment>
    <fragment id="brand-new" name="Brand new" kind="Task" provenance="Catalog">
      <definition>Ours</definition>
    </fragment>
  </phase>
  <sequences/>
</method>"#;
        let m = import_xml(doc.as_bytes(), &mm).unwrap();
        assert_eq!(
            m.member("define-plan").unwrap().definition_override.as_deref(),
            Some("Local text")
        );
        let user = m.user_fragment("brand-new").unwrap();
        assert_eq!(user.provenance, Provenance::UserDefined);
        assert_eq!(user.phase.as_deref(), Some("plan"));
    }

    #[test]
    fn export_refuses_broken_methods() {
        let mm = shipped_catalog();
        let mut m = instantiate(&mm, "b", &[MigrationType::V].into(), &["plan"]).unwrap();
        m.members.push(FragmentInclusion::new("ghost"));
        match export_xml(&m, &mm) {
            Err(e @ InterchangeError::Integrity(_)) => assert_eq!(e.code(), "INTEGRITY_ERROR"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn records_round_trip() {
        let (_, m) = tailored();
        assert_eq!(import_records(&export_records(&m)).unwrap(), m);
    }
}
