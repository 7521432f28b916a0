//! Synthetic fixture generator: multi-format log corpora with ground-truth
//! log types, planted entities and functional classes, planted attacks, and
//! scripted-responder rules generated from the oracle so every LLM-backed
//! stage runs deterministically offline.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ScriptAction, ScriptRule, TemplateId};
use crate::types::{LogRecord, ProvenanceRecord, RecordOrigin, Timestamp};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least two formats, got {0}")]
    TooFewFormats(usize),
    #[error("format {format} template is missing the {placeholder} placeholder")]
    MissingPlaceholder { format: String, placeholder: String },
    #[error("unknown entity class {0}")]
    UnknownClass(String),
    #[error("unknown format {0}")]
    UnknownFormat(String),
    #[error("unknown attack entity {0}")]
    UnknownAttackEntity(String),
    #[error("attack entity {0} is unreachable: it appears in no interaction")]
    UnreachableAttackEntity(String),
    #[error("entity class {0} has no names")]
    EmptyClass(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsStyle {
    Iso8601,
    UnixSeconds,
}

/// One structural log format. The placeholders present in the template
/// decide which provenance fields the format carries; `{ts}`, `{sid}`,
/// `{did}` and `{itype}` are mandatory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatSpec {
    pub format_id: String,
    pub template: String,
    pub ts_style: TsStyle,
    /// Literal substring unique to this format, used to route scripted
    /// rule-generator responses.
    pub anchor: String,
    /// Per-field regex patterns the scripted rule generator answers with.
    pub field_regex: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityClass {
    pub class_label: String,
    pub coarse_type: String,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointRef {
    /// Entity sampled round-robin from a benign class.
    Class { class_label: String },
    /// A planted attack entity, referenced by name.
    AttackEntity { name: String },
    /// A literal ip:port endpoint (no name, keyed verbatim).
    Endpoint { address: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub src: EndpointRef,
    pub dst: EndpointRef,
    pub itype: String,
    pub format_id: String,
    pub repetitions: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub attack_id: String,
    /// (entity name, functional class label unseen in benign data)
    pub entities: Vec<(String, String)>,
    pub interactions: Vec<InteractionSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub formats: Vec<FormatSpec>,
    pub entity_classes: Vec<EntityClass>,
    pub interactions: Vec<InteractionSpec>,
    pub attacks: Vec<AttackSpec>,
    pub seed: u64,
    pub window_size: usize,
    pub platform: String,
}

/// Everything generated from a corpus spec.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub logs: Vec<LogRecord>,
    /// log id -> ground-truth format id.
    pub truth_types: BTreeMap<String, String>,
    /// entity name -> ground-truth class label.
    pub entity_labels: BTreeMap<String, String>,
    /// attack id -> node keys of its planted entities.
    pub attack_nodes: BTreeMap<String, BTreeSet<String>>,
    /// log id -> oracle provenance record.
    pub oracle_records: BTreeMap<String, ProvenanceRecord>,
    /// Scripted-responder rules reproducing the oracle through the real
    /// extraction path.
    pub script: Vec<ScriptRule>,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.formats.len() < 2 {
            return Err(SynthError::TooFewFormats(self.formats.len()));
        }
        for format in &self.formats {
            for placeholder in ["{ts}", "{sid}", "{did}", "{itype}"] {
                if !format.template.contains(placeholder) {
                    return Err(SynthError::MissingPlaceholder {
                        format: format.format_id.clone(),
                        placeholder: placeholder.to_string(),
                    });
                }
            }
        }
        for class in &self.entity_classes {
            if class.names.is_empty() {
                return Err(SynthError::EmptyClass(class.class_label.clone()));
            }
        }
        let attack_names: BTreeSet<&str> = self
            .attacks
            .iter()
            .flat_map(|a| a.entities.iter().map(|(n, _)| n.as_str()))
            .collect();
        let all_interactions = || {
            self.interactions
                .iter()
                .chain(self.attacks.iter().flat_map(|a| a.interactions.iter()))
        };
        for interaction in all_interactions() {
            if !self.formats.iter().any(|f| f.format_id == interaction.format_id) {
                return Err(SynthError::UnknownFormat(interaction.format_id.clone()));
            }
            for end in [&interaction.src, &interaction.dst] {
                match end {
                    EndpointRef::Class { class_label } => {
                        if !self.entity_classes.iter().any(|c| &c.class_label == class_label) {
                            return Err(SynthError::UnknownClass(class_label.clone()));
                        }
                    }
                    EndpointRef::AttackEntity { name } => {
                        if !attack_names.contains(name.as_str()) {
                            return Err(SynthError::UnknownAttackEntity(name.clone()));
                        }
                    }
                    EndpointRef::Endpoint { .. } => {}
                }
            }
        }
        for attack in &self.attacks {
            for (name, _) in &attack.entities {
                let reachable = attack.interactions.iter().any(|i| {
                    matches!(&i.src, EndpointRef::AttackEntity { name: n } if n == name)
                        || matches!(&i.dst, EndpointRef::AttackEntity { name: n } if n == name)
                });
                if !reachable {
                    return Err(SynthError::UnreachableAttackEntity(name.clone()));
                }
            }
        }
        Ok(())
    }

    /// Same corpus with the attacks removed; benign content is unchanged.
    pub fn without_attacks(&self) -> CorpusSpec {
        CorpusSpec {
            attacks: Vec::new(),
            ..self.clone()
        }
    }
}

struct ResolvedEndpoint {
    id: String,
    name: Option<String>,
    coarse_type: Option<String>,
}

struct EntityDirectory {
    /// name -> (numeric id, coarse type, class label)
    by_name: BTreeMap<String, (String, String, String)>,
    /// class label -> names in declaration order
    by_class: BTreeMap<String, Vec<String>>,
}

impl EntityDirectory {
    fn build(spec: &CorpusSpec) -> Self {
        let mut by_name = BTreeMap::new();
        let mut by_class: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut next_id = 400u64;
        for class in &spec.entity_classes {
            for name in &class.names {
                by_name.insert(
                    name.clone(),
                    (next_id.to_string(), class.coarse_type.clone(), class.class_label.clone()),
                );
                by_class
                    .entry(class.class_label.clone())
                    .or_default()
                    .push(name.clone());
                next_id += 1;
            }
        }
        for attack in &spec.attacks {
            for (name, label) in &attack.entities {
                by_name.insert(
                    name.clone(),
                    (next_id.to_string(), "process".to_string(), label.clone()),
                );
                next_id += 1;
            }
        }
        EntityDirectory { by_name, by_class }
    }

    fn resolve(&self, end: &EndpointRef, pick: usize) -> ResolvedEndpoint {
        match end {
            EndpointRef::Class { class_label } => {
                let names = &self.by_class[class_label];
                let name = &names[pick % names.len()];
                let (id, coarse, _) = &self.by_name[name];
                ResolvedEndpoint {
                    id: id.clone(),
                    name: Some(name.clone()),
                    coarse_type: Some(coarse.clone()),
                }
            }
            EndpointRef::AttackEntity { name } => {
                let (id, coarse, _) = &self.by_name[name];
                ResolvedEndpoint {
                    id: id.clone(),
                    name: Some(name.clone()),
                    coarse_type: Some(coarse.clone()),
                }
            }
            EndpointRef::Endpoint { address } => ResolvedEndpoint {
                id: address.clone(),
                name: None,
                coarse_type: None,
            },
        }
    }
}

fn render_ts(style: TsStyle, epoch_secs: i64) -> String {
    match style {
        TsStyle::Iso8601 => chrono::DateTime::from_timestamp(epoch_secs, 0)
            .expect("valid epoch")
            .format("%Y-%m-%dT%H:%M:%SZ")
            .to_string(),
        TsStyle::UnixSeconds => epoch_secs.to_string(),
    }
}

struct RenderedLine {
    format_id: String,
    raw: String,
    record: ProvenanceRecord,
    summary: String,
    p2_response: String,
    p3_response: String,
    p4_response: String,
}

fn render_line(
    format: &FormatSpec,
    src: &ResolvedEndpoint,
    dst: &ResolvedEndpoint,
    itype: &str,
    epoch_secs: i64,
) -> RenderedLine {
    let ts_raw = render_ts(format.ts_style, epoch_secs);
    let fill = |slot: &str, value: &Option<String>| -> String {
        if format.template.contains(slot) {
            value.clone().unwrap_or_default()
        } else {
            String::new()
        }
    };
    let sname = fill("{sname}", &src.name);
    let dname = fill("{dname}", &dst.name);
    let stype = fill("{stype}", &src.coarse_type);
    let dtype = fill("{dtype}", &dst.coarse_type);
    let raw = format
        .template
        .replace("{ts}", &ts_raw)
        .replace("{sid}", &src.id)
        .replace("{did}", &dst.id)
        .replace("{itype}", itype)
        .replace("{sname}", &sname)
        .replace("{dname}", &dname)
        .replace("{stype}", &stype)
        .replace("{dtype}", &dtype);

    let present = |slot: &str, value: String| -> Option<String> {
        if format.template.contains(slot) && !value.is_empty() {
            Some(value)
        } else {
            None
        }
    };
    let record = ProvenanceRecord {
        sid: src.id.clone(),
        stype: present("{stype}", stype.clone()),
        sname: present("{sname}", sname.clone()),
        did: dst.id.clone(),
        dtype: present("{dtype}", dtype.clone()),
        dname: present("{dname}", dname.clone()),
        itype: itype.to_string(),
        time: Some(Timestamp {
            raw: ts_raw.clone(),
            epoch_micros: Some(epoch_secs * 1_000_000),
        }),
        origin: RecordOrigin::Cpe,
        source_log_id: String::new(), // filled after shuffling assigns ids
    };

    let describe = |name: &Option<String>, id: &str, coarse: &Option<String>| -> String {
        let mut out = String::new();
        if let Some(name) = name {
            out.push_str(&format!("\"{name}\" "));
        }
        out.push_str(&format!("({id})"));
        if let Some(coarse) = coarse {
            out.push_str(&format!(" [{coarse}]"));
        }
        out
    };
    let summary = format!(
        "The entity {} performed a {{{itype}}} on {}.",
        describe(&record.sname, &record.sid, &record.stype),
        describe(&record.dname, &record.did, &record.dtype),
    );

    let type_line = |id: &str, t: &Option<String>| match t {
        Some(t) => format!("\"{id}\" = \"{t}\""),
        None => format!("\"{id}\" = \"NONE\""),
    };
    let p2_response = format!(
        "{}\n{}",
        type_line(&record.sid, &record.stype),
        type_line(&record.did, &record.dtype)
    );
    let name_line = |id: &str, n: &Option<String>| match n {
        Some(n) => format!("\"{id}\" = \"{n}\""),
        None => format!("\"{id}\" = NONE"),
    };
    let p3_response = format!(
        "[RELATED ENTITIES and IP ADDRESSES]\n\n({}, {})  A: [{}]\n\n[ENTITY NAMES]\n\n{}\n{}",
        record.sid,
        record.did,
        record.itype,
        name_line(&record.sid, &record.sname),
        name_line(&record.did, &record.dname)
    );
    let p4_response = format!(
        "({}, {})  A: [{}] {{D=->}} (timestamp={ts_raw})",
        record.sid, record.did, record.itype
    );
    RenderedLine {
        format_id: format.format_id.clone(),
        raw,
        record,
        summary,
        p2_response,
        p3_response,
        p4_response,
    }
}

/// Fixed attack-graph narrative the scripted assistant always returns, so
/// poisoning runs compare identical summaries by construction.
pub const SCRIPTED_ATTACK_SUMMARY: &str = "Summary: A previously unseen process wrote an implant into a user document store, escalated by injecting into a trusted editor process, and then issued repeated beacons to an external address, while a second stealthy process exfiltrated a staged archive.\n\nStage: Execution\nReasoning: an unrecognized binary executed and wrote implant content into local files.\n\nStage: Command and Control\nReasoning: the implant process issued repeated beacon connections to a single external endpoint.";

fn script_for(lines: &[(String, RenderedLine)], spec: &CorpusSpec, directory: &EntityDirectory) -> Vec<ScriptRule> {
    let mut rules = Vec::new();
    for (_, line) in lines {
        rules.push(ScriptRule::respond(
            TemplateId::P1,
            vec![line.raw.clone()],
            line.summary.clone(),
        ));
        rules.push(ScriptRule::respond(
            TemplateId::P2,
            vec![line.raw.clone()],
            line.p2_response.clone(),
        ));
        rules.push(ScriptRule::respond(
            TemplateId::P3,
            vec![line.raw.clone()],
            line.p3_response.clone(),
        ));
        rules.push(ScriptRule::respond(
            TemplateId::P4,
            vec![line.raw.clone()],
            line.p4_response.clone(),
        ));
    }
    // Rule-generator answers are per (format, field) keyed by the format's
    // anchor substring appearing in the prompt through the log text.
    for format in &spec.formats {
        for (field_name, pattern) in &format.field_regex {
            rules.push(ScriptRule::respond(
                TemplateId::P5,
                vec![format.anchor.clone(), format!("Field: {field_name}")],
                pattern.clone(),
            ));
        }
        rules.push(ScriptRule::respond(
            TemplateId::P5,
            vec![format.anchor.clone()],
            "No Regex",
        ));
    }
    // Functional labels per known entity, NO LABEL for everything else.
    for (name, (_, _, class_label)) in &directory.by_name {
        rules.push(ScriptRule::respond(
            TemplateId::P6,
            vec![format!("Entity:\n{name}")],
            format!("{name} | Type: {class_label}"),
        ));
        rules.push(ScriptRule::respond(
            TemplateId::P7,
            vec![format!("Entity:\n{name}")],
            "YES",
        ));
    }
    rules.push(ScriptRule {
        template: Some(TemplateId::P6),
        contains: vec![],
        action: ScriptAction::Respond {
            text: "entity | Type: <NO LABEL>".to_string(),
        },
    });
    rules.push(ScriptRule {
        template: Some(TemplateId::P7),
        contains: vec![],
        action: ScriptAction::Respond {
            text: "NO".to_string(),
        },
    });
    rules.push(ScriptRule {
        template: Some(TemplateId::P8),
        contains: vec![],
        action: ScriptAction::Respond {
            text: SCRIPTED_ATTACK_SUMMARY.to_string(),
        },
    });
    rules.push(ScriptRule {
        template: Some(TemplateId::P9),
        contains: vec![],
        action: ScriptAction::Respond {
            text: "YES".to_string(),
        },
    });
    rules
}

/// Generate the corpus: benign interactions first, then attack lines, all
/// shuffled by the seeded generator into an incremental stream.
pub fn generate(spec: &CorpusSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let directory = EntityDirectory::build(spec);
    let mut rendered: Vec<RenderedLine> = Vec::new();
    let base_epoch = 1_523_361_600i64; // 2018-04-10T12:00:00Z
    let mut tick = 0i64;

    let format_of = |id: &str| spec.formats.iter().find(|f| f.format_id == id).expect("validated");
    for interaction in &spec.interactions {
        for rep in 0..interaction.repetitions {
            let src = directory.resolve(&interaction.src, rep as usize);
            let dst = directory.resolve(&interaction.dst, (rep as usize).wrapping_add(1));
            rendered.push(render_line(
                format_of(&interaction.format_id),
                &src,
                &dst,
                &interaction.itype,
                base_epoch + tick,
            ));
            tick += 1;
        }
    }
    for attack in &spec.attacks {
        for interaction in &attack.interactions {
            for rep in 0..interaction.repetitions {
                let src = directory.resolve(&interaction.src, rep as usize);
                let dst = directory.resolve(&interaction.dst, (rep as usize).wrapping_add(1));
                rendered.push(render_line(
                    format_of(&interaction.format_id),
                    &src,
                    &dst,
                    &interaction.itype,
                    base_epoch + tick,
                ));
                tick += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rendered.shuffle(&mut rng);

    let width = rendered.len().to_string().len().max(5);
    let mut logs = Vec::with_capacity(rendered.len());
    let mut truth_types = BTreeMap::new();
    let mut oracle_records = BTreeMap::new();
    let mut keyed: Vec<(String, RenderedLine)> = Vec::with_capacity(rendered.len());
    for (idx, mut line) in rendered.into_iter().enumerate() {
        let log_id = format!("L{idx:0width$}");
        line.record.source_log_id = log_id.clone();
        logs.push(LogRecord {
            log_id: log_id.clone(),
            raw_text: line.raw.clone(),
            arrival_seq: idx as u64,
            window_id: (idx / spec.window_size.max(1)) as u64,
            source_tag: Some(spec.platform.clone()),
        });
        truth_types.insert(log_id.clone(), line.format_id.clone());
        oracle_records.insert(log_id.clone(), line.record.clone());
        keyed.push((log_id, line));
    }

    let entity_labels: BTreeMap<String, String> = directory
        .by_name
        .iter()
        .map(|(name, (_, _, label))| (name.clone(), label.clone()))
        .collect();
    let attack_nodes: BTreeMap<String, BTreeSet<String>> = spec
        .attacks
        .iter()
        .map(|a| {
            (
                a.attack_id.clone(),
                a.entities
                    .iter()
                    .map(|(n, _)| crate::enrich::normalize_entity_name(n))
                    .collect(),
            )
        })
        .collect();
    let script = script_for(&keyed, spec, &directory);
    Ok(SynthOutput {
        logs,
        truth_types,
        entity_labels,
        attack_nodes,
        oracle_records,
        script,
    })
}

/// The six-format demonstration corpus with two planted attacks (one
/// five-entity chain, one single stealthy entity).
pub fn demo_spec(seed: u64, benign_scale: u32) -> CorpusSpec {
    let regexes = |pairs: &[(&str, &str)]| -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    };
    let formats = vec![
        FormatSpec {
            format_id: "audit".to_string(),
            template: "{ts} AUDIT type=SYSCALL msg_source=kernel-audit-subsystem channel=secure subj_pid={sid} subj_comm={sname} subj_kind={stype} action={itype} obj_ref={did} obj_path={dname} obj_kind={dtype} result=success arch=x86_64 host=workstation-alpha ses=trusted-session subj_cred=staff-profile obj_owner=analyst-group mode=regular fsctx=confined_user_home syscall_gate=openat_audit exit_code=zero items=paired tty=console permissive=disabled audit_backlog=nominal key=provenance-watch".to_string(),
            ts_style: TsStyle::UnixSeconds,
            anchor: "AUDIT type=SYSCALL".to_string(),
            field_regex: regexes(&[
                ("source ID", r"subj_pid=(\S+) subj_comm"),
                ("source entity name", r"subj_comm=(\S+) subj_kind"),
                ("source type", r"subj_kind=(\S+) action"),
                ("interaction type", r"action=(\S+) obj_ref"),
                ("destination ID", r"obj_ref=(\S+) obj_path"),
                ("destination entity name", r"obj_path=(\S+) obj_kind"),
                ("destination type", r"obj_kind=(\S+) result"),
                ("timestamp", r"^(\S+) AUDIT type=SYSCALL"),
            ]),
        },
        FormatSpec {
            format_id: "json_events".to_string(),
            template: "{\"timestamp\":\"{ts}\",\"severity\":\"INFO\",\"collector\":\"endpoint-telemetry-shipper\",\"channel\":\"operational\",\"event\":{\"actor_uuid\":\"{sid}\",\"image\":\"{sname}\",\"operation\":\"{itype}\",\"object_uuid\":\"{did}\",\"object_path\":\"{dname}\"},\"schema\":\"telemetry-v2\",\"pipeline\":\"collector-edge\",\"tenant\":\"blue-workstations\",\"integrity\":\"sealed\",\"enrichment\":\"pending\",\"retention\":\"standard-window\"}".to_string(),
            ts_style: TsStyle::Iso8601,
            anchor: "\"schema\":\"telemetry-v2\"".to_string(),
            field_regex: regexes(&[
                ("source ID", r#""actor_uuid":"([^"]+)""#),
                ("source entity name", r#""image":"([^"]+)""#),
                ("interaction type", r#""operation":"([^"]+)""#),
                ("destination ID", r#""object_uuid":"([^"]+)""#),
                ("destination entity name", r#""object_path":"([^"]+)""#),
                ("timestamp", r#""timestamp":"([^"]+)""#),
            ]),
        },
        FormatSpec {
            format_id: "dns_relay".to_string(),
            template: "{ts} dns-relay daemon verdict=NOERROR zone_profile=internal-recursive client_tag={sid} client_image={sname} rrclass=IN verb={itype} qhandle={did} qname={dname} resolver=upstream-cache ttl=minimum upstream_pool=anycast-cluster cache_state=warm policy_zone=internal-zone dnssec=validated transport=udp-plain retries=none flags=recursion-desired scope=workstation-fleet telemetry=sampled".to_string(),
            ts_style: TsStyle::UnixSeconds,
            anchor: "dns-relay daemon".to_string(),
            field_regex: regexes(&[
                ("source ID", r"client_tag=(\S+) client_image"),
                ("source entity name", r"client_image=(\S+) rrclass"),
                ("interaction type", r"verb=(\S+) qhandle"),
                ("destination ID", r"qhandle=(\S+) qname"),
                ("destination entity name", r"qname=(\S+) resolver"),
                ("timestamp", r"^(\S+) dns-relay daemon"),
            ]),
        },
        FormatSpec {
            format_id: "firewall".to_string(),
            template: "FWGATE|{ts}|policy=std-outbound|proto=tcp|state=established|origin_pid={sid}|origin_image={sname}|conn={itype}|peer_socket={did}|verdict=permit|queue=wan|zone_src=lan-users|zone_dst=wan-edge|nat=masquerade|mss=clamped|ttl_policy=default|inspection=stateful-deep|logging=sampled|connmark=session-tracked|shaper=bulk-class".to_string(),
            ts_style: TsStyle::Iso8601,
            anchor: "FWGATE|".to_string(),
            field_regex: regexes(&[
                ("source ID", r"origin_pid=([^|]+)\|origin_image"),
                ("source entity name", r"origin_image=([^|]+)\|conn"),
                ("interaction type", r"conn=([^|]+)\|peer_socket"),
                ("destination ID", r"peer_socket=([^|]+)\|verdict"),
                ("timestamp", r"FWGATE\|([^|]+)\|policy"),
            ]),
        },
        FormatSpec {
            format_id: "kernel_trace".to_string(),
            template: "[{ts}] kernel: trace_point vfs layer observer ring buffer task{{sid}} image<{sname}> invoked {itype} upon inode{{did}} mapped<{dname}> cpu=quad irq=masked depth=shallow sched_class=fair preempt=voluntary lockset=none numa_node=local cgroup=user-slice audit_context=enabled ftrace_ring=primary watchdog=quiet probe=stable tracer=function-graph".to_string(),
            ts_style: TsStyle::UnixSeconds,
            anchor: "kernel: trace_point vfs".to_string(),
            field_regex: regexes(&[
                ("source ID", r"task\{(\S+)\} image"),
                ("source entity name", r"image<([^>]+)> invoked"),
                ("interaction type", r"invoked (\S+) upon"),
                ("destination ID", r"inode\{(\S+)\} mapped"),
                ("destination entity name", r"mapped<([^>]+)> cpu"),
                ("timestamp", r"^\[(\S+)\] kernel"),
            ]),
        },
        FormatSpec {
            format_id: "http_gateway".to_string(),
            template: "{ts} httpgw vhost=intranet handler=reverse-proxy tier=edge caller_ref={sid} caller_image={sname} method={itype} route_ref={did} route_host={dname} code=200 latency=low cache=miss upstream=pool-blue compression=enabled session_affinity=cookie tls=terminated cipher_suite=modern forward_headers=standard request_class=interactive".to_string(),
            ts_style: TsStyle::Iso8601,
            anchor: "httpgw vhost=intranet".to_string(),
            field_regex: regexes(&[
                ("source ID", r"caller_ref=(\S+) caller_image"),
                ("source entity name", r"caller_image=(\S+) method"),
                ("interaction type", r"method=(\S+) route_ref"),
                ("destination ID", r"route_ref=(\S+) route_host"),
                ("destination entity name", r"route_host=(\S+) code"),
                ("timestamp", r"^(\S+) httpgw vhost"),
            ]),
        },
    ];

    let entity_classes = vec![
        EntityClass {
            class_label: "document editor".to_string(),
            coarse_type: "process".to_string(),
            names: vec!["/usr/bin/wordpad-office".to_string(), "/opt/suite/texteditor".to_string()],
        },
        EntityClass {
            class_label: "text document".to_string(),
            coarse_type: "file".to_string(),
            names: vec![
                "/home/analyst/reports/quarterly.doc".to_string(),
                "/home/analyst/notes/meeting.txt".to_string(),
            ],
        },
        EntityClass {
            class_label: "web browser".to_string(),
            coarse_type: "process".to_string(),
            names: vec!["/usr/bin/webview-browser".to_string()],
        },
        EntityClass {
            class_label: "content domain".to_string(),
            coarse_type: "domain".to_string(),
            names: vec!["cdn.assets.intra".to_string(), "portal.corp.intra".to_string()],
        },
        EntityClass {
            class_label: "system updater".to_string(),
            coarse_type: "process".to_string(),
            names: vec!["/usr/libexec/update-agent".to_string()],
        },
        EntityClass {
            class_label: "package archive".to_string(),
            coarse_type: "file".to_string(),
            names: vec!["/var/cache/pkg/base-image.pkg".to_string()],
        },
        EntityClass {
            class_label: "shell process".to_string(),
            coarse_type: "process".to_string(),
            names: vec!["/bin/corpshell".to_string()],
        },
        EntityClass {
            class_label: "configuration file".to_string(),
            coarse_type: "file".to_string(),
            names: vec!["/etc/corp/profile.conf".to_string()],
        },
    ];

    let class_ref = |label: &str| EndpointRef::Class { class_label: label.to_string() };
    let benign = |src: &str, dst: &str, itype: &str, format_id: &str, reps: u32| InteractionSpec {
        src: class_ref(src),
        dst: class_ref(dst),
        itype: itype.to_string(),
        format_id: format_id.to_string(),
        repetitions: reps * benign_scale,
    };
    let interactions = vec![
        benign("document editor", "text document", "write", "audit", 8),
        benign("document editor", "text document", "read", "json_events", 8),
        benign("web browser", "content domain", "resolve", "dns_relay", 10),
        benign("web browser", "content domain", "fetch", "http_gateway", 8),
        benign("system updater", "package archive", "verify", "kernel_trace", 8),
        benign("shell process", "configuration file", "read", "audit", 6),
        benign("system updater", "package archive", "replace", "json_events", 4),
        benign("shell process", "configuration file", "stat", "kernel_trace", 5),
        InteractionSpec {
            src: class_ref("system updater"),
            dst: EndpointRef::Endpoint { address: "198.51.100.7:443".to_string() },
            itype: "sync".to_string(),
            format_id: "firewall".to_string(),
            repetitions: 6 * benign_scale,
        },
        InteractionSpec {
            src: class_ref("web browser"),
            dst: EndpointRef::Endpoint { address: "203.0.113.40:443".to_string() },
            itype: "session".to_string(),
            format_id: "firewall".to_string(),
            repetitions: 5 * benign_scale,
        },
    ];

    let attack_entity = |name: &str| EndpointRef::AttackEntity { name: name.to_string() };
    let attacks = vec![
        AttackSpec {
            attack_id: "implant-chain".to_string(),
            entities: vec![
                ("/tmp/.cache/dropper-shade".to_string(), "implant dropper".to_string()),
                ("/tmp/.cache/beacon-relay".to_string(), "beacon implant".to_string()),
                ("/tmp/.cache/stage-two-loader".to_string(), "second stage loader".to_string()),
                ("/tmp/.cache/cred-harvest".to_string(), "credential harvester".to_string()),
                ("/tmp/.cache/wiper-blade".to_string(), "log wiper".to_string()),
            ],
            interactions: vec![
                InteractionSpec {
                    src: attack_entity("/tmp/.cache/dropper-shade"),
                    dst: attack_entity("/tmp/.cache/stage-two-loader"),
                    itype: "implant-write".to_string(),
                    format_id: "audit".to_string(),
                    repetitions: 2,
                },
                InteractionSpec {
                    src: attack_entity("/tmp/.cache/stage-two-loader"),
                    dst: attack_entity("/tmp/.cache/beacon-relay"),
                    itype: "spawn-hidden".to_string(),
                    format_id: "kernel_trace".to_string(),
                    repetitions: 2,
                },
                InteractionSpec {
                    src: attack_entity("/tmp/.cache/beacon-relay"),
                    dst: EndpointRef::Endpoint { address: "192.0.2.66:8443".to_string() },
                    itype: "beacon".to_string(),
                    format_id: "firewall".to_string(),
                    repetitions: 6,
                },
                InteractionSpec {
                    src: attack_entity("/tmp/.cache/cred-harvest"),
                    dst: class_ref("configuration file"),
                    itype: "scrape-secrets".to_string(),
                    format_id: "audit".to_string(),
                    repetitions: 2,
                },
                InteractionSpec {
                    src: attack_entity("/tmp/.cache/dropper-shade"),
                    dst: attack_entity("/tmp/.cache/cred-harvest"),
                    itype: "implant-write".to_string(),
                    format_id: "audit".to_string(),
                    repetitions: 1,
                },
                InteractionSpec {
                    src: attack_entity("/tmp/.cache/wiper-blade"),
                    dst: class_ref("text document"),
                    itype: "shred".to_string(),
                    format_id: "kernel_trace".to_string(),
                    repetitions: 2,
                },
                InteractionSpec {
                    src: attack_entity("/tmp/.cache/stage-two-loader"),
                    dst: attack_entity("/tmp/.cache/wiper-blade"),
                    itype: "spawn-hidden".to_string(),
                    format_id: "kernel_trace".to_string(),
                    repetitions: 1,
                },
            ],
        },
        AttackSpec {
            attack_id: "stealth-exfil".to_string(),
            entities: vec![(
                "/opt/.hidden/quiet-siphon".to_string(),
                "staged exfiltration tool".to_string(),
            )],
            interactions: vec![InteractionSpec {
                src: attack_entity("/opt/.hidden/quiet-siphon"),
                dst: EndpointRef::Endpoint { address: "192.0.2.91:53".to_string() },
                itype: "exfil-tunnel".to_string(),
                format_id: "dns_relay".to_string(),
                repetitions: 3,
            }],
        },
    ];

    CorpusSpec {
        formats,
        entity_classes,
        interactions,
        attacks,
        seed,
        window_size: 64,
        platform: "mixed enterprise".to_string(),
    }
}
