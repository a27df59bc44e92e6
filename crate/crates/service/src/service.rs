use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sevscale::audit::{balance_report, export_datasheet, DatasheetConfig, GroupBalanceReport};
use sevscale::model::{AnnotatorProfile, GroupId, Phase, Pool};
use sevscale::reliability::{split_half_reliability, ReliabilityReport};
use sevscale::scoring::{compute_partial_scores, write_scores_csv, SeverityScore};
use sevscale::{
    AggregatedLabel, AnnotatorId, BwsDesign, CampaignId, CampaignPolicy, IdentityRegistry, Item, ItemId, Judgment,
    SubjectMatterLabel, Timestamp,
};

use crate::clock::Clock;
use crate::error::ServiceError;
use crate::events::{Event, PoolDesign, Unit};
use crate::log::EventLog;
use crate::state::{Answer, CampaignState, CampaignStatus, Exposure};

struct Slot {
    state: CampaignState,
    log: EventLog,
}

impl Slot {
    fn commit(&mut self, at: Timestamp, event: Event) -> Result<(), ServiceError> {
        let envelope = self.log.append(at, event)?;
        self.state.apply(&envelope);
        Ok(())
    }
}

/// Campaign service. Each campaign has one writer lock; the event is on disk
/// before state changes, so a crash never loses an acknowledged answer.
pub struct Service {
    clock: Arc<dyn Clock>,
    data_dir: Option<PathBuf>,
    campaigns: RwLock<BTreeMap<CampaignId, Arc<Mutex<Slot>>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invite {
    pub annotator_id: AnnotatorId,
    /// Shown once; exchanged for a token at consent.
    pub invite_code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub annotator_id: AnnotatorId,
    /// Bearer token. Only its digest is stored.
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group_id: GroupId,
    pub display_name: String,
    pub basis: sevscale::model::Basis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskPayload {
    SubjectMatter {
        item: Item,
        registry_version: u32,
        groups: Vec<GroupSummary>,
    },
    /// Items in presentation order.
    Severity {
        pool: Pool,
        tuple_id: sevscale::TupleId,
        items: Vec<Item>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub assignment_id: String,
    pub annotator_id: AnnotatorId,
    pub payload: TaskPayload,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub instructions: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgment {
    pub assignment_id: String,
    pub unit: Unit,
    /// Answers collected for the unit, this one included.
    pub collected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phase: Phase,
    pub designs: Vec<DesignSummary>,
    pub excluded_items: Vec<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub pool: Pool,
    pub design_id: String,
    pub items: usize,
    pub tuples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorView {
    pub profile: AnnotatorProfile,
    pub exposure: Exposure,
    pub max_session_minutes: u32,
    pub max_daily_minutes: u32,
    pub instructions: String,
    pub live_assignment: Option<String>,
}

/// Campaign data copied out under the lock, for exports and reports.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub campaign: sevscale::model::Campaign,
    pub aggregated: BTreeMap<ItemId, AggregatedLabel>,
    pub pools: Vec<PoolDesign>,
    pub merged_design: Option<BwsDesign>,
    pub judgments: Vec<Judgment>,
    pub labelings: Vec<sevscale::ItemLabeling>,
}

fn secret() -> String {
    let bytes: [u8; 24] = rand::rng().random();
    hex::encode(bytes)
}

fn check_campaign_id(id: &str) -> Result<(), ServiceError> {
    let ok = (1..=64).contains(&id.len()) && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::InvalidCampaignId(id.to_owned()))
    }
}

impl Service {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self {
            clock,
            data_dir: None,
            campaigns: RwLock::new(BTreeMap::new()),
        }
    }

    /// Opens `data_dir`, replaying every campaign log found there.
    pub fn open(data_dir: &Path, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(data_dir)?;
        let mut campaigns = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(data_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let (log, events) = EventLog::open(&path)?;
            if events.is_empty() {
                continue;
            }
            let state = CampaignState::replay(&events)?;
            tracing::info!(campaign = %state.campaign.campaign_id, events = events.len(), "replayed campaign");
            campaigns.insert(state.campaign.campaign_id.clone(), Arc::new(Mutex::new(Slot { state, log })));
        }
        Ok(Self {
            clock,
            data_dir: Some(data_dir.to_owned()),
            campaigns: RwLock::new(campaigns),
        })
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn campaign_ids(&self) -> Vec<CampaignId> {
        self.campaigns.read().keys().cloned().collect()
    }

    fn slot(&self, id: &CampaignId) -> Result<Arc<Mutex<Slot>>, ServiceError> {
        self.campaigns
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::CampaignNotFound(id.clone()))
    }

    fn write<T>(&self, id: &CampaignId, f: impl FnOnce(&mut Slot, Timestamp) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let slot = self.slot(id)?;
        let mut guard = slot.lock();
        let now = self.clock.now();
        f(&mut guard, now)
    }

    fn read<T>(&self, id: &CampaignId, f: impl FnOnce(&CampaignState, Timestamp) -> T) -> Result<T, ServiceError> {
        let slot = self.slot(id)?;
        let guard = slot.lock();
        Ok(f(&guard.state, self.clock.now()))
    }

    pub fn create_campaign(&self, id: CampaignId, policy: CampaignPolicy) -> Result<CampaignStatus, ServiceError> {
        check_campaign_id(id.as_str())?;
        policy.validate()?;
        let mut campaigns = self.campaigns.write();
        if campaigns.contains_key(&id) {
            return Err(ServiceError::CampaignExists(id));
        }
        let mut log = match &self.data_dir {
            Some(dir) => {
                let path = dir.join(format!("{id}.jsonl"));
                let (log, events) = EventLog::open(&path)?;
                if !events.is_empty() {
                    return Err(ServiceError::CampaignExists(id));
                }
                log
            }
            None => EventLog::in_memory(),
        };
        let envelope = log.append(
            self.clock.now(),
            Event::CampaignCreated {
                campaign_id: id.clone(),
                policy: policy.clone(),
            },
        )?;
        let mut state = CampaignState::new(id.clone(), policy);
        state.apply(&envelope);
        let status = state.status();
        campaigns.insert(id, Arc::new(Mutex::new(Slot { state, log })));
        Ok(status)
    }

    pub fn add_items(&self, id: &CampaignId, items: Vec<Item>) -> Result<usize, ServiceError> {
        self.write(id, |slot, now| {
            let event = slot.state.decide_add_items(items)?;
            slot.commit(now, event)?;
            Ok(slot.state.campaign.items.len())
        })
    }

    pub fn set_registry(&self, id: &CampaignId, registry: IdentityRegistry) -> Result<u32, ServiceError> {
        self.write(id, |slot, now| {
            let event = slot.state.decide_set_registry(registry)?;
            slot.commit(now, event)?;
            Ok(slot.state.campaign.registry.version)
        })
    }

    pub fn enroll(&self, id: &CampaignId, annotator_id: AnnotatorId, pools: BTreeSet<Pool>) -> Result<Invite, ServiceError> {
        let invite_code = secret();
        self.write(id, |slot, now| {
            let event = slot.state.decide_enroll(annotator_id.clone(), pools, &invite_code)?;
            slot.commit(now, event)?;
            Ok(Invite {
                annotator_id,
                invite_code,
            })
        })
    }

    /// Records consent and issues a fresh bearer token. Repeating consent
    /// with the invite code replaces the token.
    pub fn consent(&self, id: &CampaignId, annotator_id: &AnnotatorId, invite_code: &str) -> Result<Credentials, ServiceError> {
        let token = secret();
        self.write(id, |slot, now| {
            let event = slot.state.decide_consent(annotator_id, invite_code, &token)?;
            slot.commit(now, event)?;
            Ok(Credentials {
                annotator_id: annotator_id.clone(),
                token,
            })
        })
    }

    pub fn authenticate(&self, id: &CampaignId, token: &str) -> Result<AnnotatorId, ServiceError> {
        self.read(id, |state, _| state.authenticate(token))?
    }

    pub fn open_phase(&self, id: &CampaignId, phase: Phase) -> Result<PhaseState, ServiceError> {
        self.write(id, |slot, now| {
            let event = slot.state.decide_open_phase(phase)?;
            let (designs, excluded_items) = match &event {
                Event::PhaseOpened { pools, excluded, .. } => (
                    pools
                        .iter()
                        .map(|p| DesignSummary {
                            pool: p.pool.clone(),
                            design_id: p.design.design_id.clone(),
                            items: p.design.item_count,
                            tuples: p.design.tuple_count,
                        })
                        .collect(),
                    excluded.clone(),
                ),
                _ => (Vec::new(), Vec::new()),
            };
            slot.commit(now, event)?;
            Ok(PhaseState {
                phase,
                designs,
                excluded_items,
            })
        })
    }

    pub fn adjudicate(
        &self,
        id: &CampaignId,
        item_id: ItemId,
        labels: BTreeSet<SubjectMatterLabel>,
    ) -> Result<AggregatedLabel, ServiceError> {
        self.write(id, |slot, now| {
            let event = slot.state.decide_adjudicate(item_id.clone(), labels)?;
            slot.commit(now, event)?;
            Ok(slot.state.aggregated()[&item_id].clone())
        })
    }

    /// Next task for the annotator. A live assignment is returned again
    /// instead of issuing a second one.
    pub fn next_task(&self, id: &CampaignId, annotator_id: &AnnotatorId) -> Result<TaskAssignment, ServiceError> {
        self.write(id, |slot, now| {
            let assignment_id = match slot.state.decide_next_task(annotator_id, now)? {
                Some(event) => {
                    let assignment_id = match &event {
                        Event::TaskIssued { assignment_id, .. } => assignment_id.clone(),
                        _ => unreachable!("next task issues a task"),
                    };
                    slot.commit(now, event)?;
                    assignment_id
                }
                None => slot
                    .state
                    .live_assignment(annotator_id, now)
                    .expect("live assignment")
                    .assignment_id
                    .clone(),
            };
            Ok(assignment_view(&slot.state, &assignment_id))
        })
    }

    pub fn submit(
        &self,
        id: &CampaignId,
        annotator_id: &AnnotatorId,
        assignment_id: &str,
        answer: Answer,
    ) -> Result<Acknowledgment, ServiceError> {
        self.write(id, |slot, now| {
            let event = slot.state.decide_submit(annotator_id, assignment_id, answer, now)?;
            slot.commit(now, event)?;
            let unit = slot.state.assignments[assignment_id].unit.clone();
            let collected = match &unit {
                Unit::Item { item_id } => slot.state.labelings.iter().filter(|l| &l.item_id == item_id).count(),
                Unit::Tuple { pool, tuple_id } => slot.state.pools[pool]
                    .judgments
                    .judgments()
                    .iter()
                    .filter(|j| &j.tuple_id == tuple_id)
                    .count(),
            };
            Ok(Acknowledgment {
                assignment_id: assignment_id.to_owned(),
                unit,
                collected,
            })
        })
    }

    /// Gives an assignment back unanswered. The unit is not offered to the
    /// same annotator again.
    pub fn release(&self, id: &CampaignId, annotator_id: &AnnotatorId, assignment_id: &str) -> Result<(), ServiceError> {
        self.write(id, |slot, now| {
            let event = slot.state.decide_release(annotator_id, assignment_id, now)?;
            slot.commit(now, event)
        })
    }

    pub fn status(&self, id: &CampaignId) -> Result<CampaignStatus, ServiceError> {
        self.read(id, |state, _| state.status())
    }

    /// Status recounted from stored answers rather than running counters.
    pub fn recount_status(&self, id: &CampaignId) -> Result<CampaignStatus, ServiceError> {
        self.read(id, |state, _| state.recount_status())
    }

    pub fn annotator(&self, id: &CampaignId, annotator_id: &AnnotatorId) -> Result<AnnotatorView, ServiceError> {
        self.read(id, |state, now| {
            let rec = state
                .annotators
                .get(annotator_id)
                .ok_or_else(|| ServiceError::AnnotatorNotFound(annotator_id.clone()))?;
            let (exposure, _) = state.exposure(rec, now);
            let mut profile = rec.profile.clone();
            for a in rec.assignments.iter().filter_map(|a| state.assignments.get(a)) {
                let end = match a.closed {
                    Some(crate::state::Closure::Submitted { at } | crate::state::Closure::Released { at }) => at,
                    None => now,
                }
                .min(a.expires_at);
                *profile.exposure_seconds.entry(a.issued_at.date_naive()).or_default() +=
                    (end - a.issued_at).num_seconds().max(0) as u64;
            }
            Ok(AnnotatorView {
                profile,
                exposure,
                max_session_minutes: state.policy().max_session_minutes,
                max_daily_minutes: state.policy().max_daily_minutes,
                instructions: state.policy().instructions.clone(),
                live_assignment: state.live_assignment(annotator_id, now).map(|a| a.assignment_id.clone()),
            })
        })?
    }

    pub fn snapshot(&self, id: &CampaignId) -> Result<Snapshot, ServiceError> {
        self.read(id, |state, _| Snapshot {
            campaign: state.campaign.clone(),
            aggregated: state.aggregated(),
            pools: state
                .pools
                .iter()
                .map(|(pool, p)| PoolDesign {
                    pool: pool.clone(),
                    routing: p.routing.clone(),
                    design: p.design.clone(),
                })
                .collect(),
            merged_design: state.merged_design(),
            judgments: state.judgments(),
            labelings: state.labelings.clone(),
        })
    }

    /// Scores from the judgments collected so far, all pools together.
    pub fn scores(&self, id: &CampaignId) -> Result<Vec<SeverityScore>, ServiceError> {
        let snap = self.snapshot(id)?;
        match &snap.merged_design {
            Some(design) => Ok(compute_partial_scores(&snap.judgments, design)?),
            None => Ok(Vec::new()),
        }
    }

    pub fn scores_csv(&self, id: &CampaignId) -> Result<String, ServiceError> {
        let snap = self.snapshot(id)?;
        let scores = match &snap.merged_design {
            Some(design) => compute_partial_scores(&snap.judgments, design)?,
            None => Vec::new(),
        };
        let items: BTreeMap<ItemId, Item> = snap.campaign.items.iter().map(|i| (i.item_id.clone(), i.clone())).collect();
        let mut out = Vec::new();
        write_scores_csv(&mut out, &scores, &items, &snap.aggregated).map_err(|e| ServiceError::Storage(e.to_string()))?;
        String::from_utf8(out).map_err(|e| ServiceError::Storage(e.to_string()))
    }

    pub fn balance(&self, id: &CampaignId, tau: f64) -> Result<GroupBalanceReport, ServiceError> {
        let snap = self.snapshot(id)?;
        balance_of(&snap, tau)
    }

    pub fn reliability(&self, id: &CampaignId, trials: usize, seed: u64) -> Result<ReliabilityReport, ServiceError> {
        let snap = self.snapshot(id)?;
        let design = snap
            .merged_design
            .as_ref()
            .ok_or_else(|| ServiceError::PhaseOrderViolation("severity phase has not been opened".into()))?;
        let mut report = split_half_reliability(&snap.judgments, design, trials, seed)?;
        report.campaign_id = Some(snap.campaign.campaign_id.clone());
        Ok(report)
    }

    /// Markdown datasheet. Reliability is left out while it cannot be computed.
    pub fn datasheet(&self, id: &CampaignId, tau: f64, trials: usize, seed: u64, config: &DatasheetConfig) -> Result<String, ServiceError> {
        let snap = self.snapshot(id)?;
        let balance = balance_of(&snap, tau)?;
        let reliability = snap.merged_design.as_ref().and_then(|design| {
            split_half_reliability(&snap.judgments, design, trials, seed)
                .map(|mut r| {
                    r.campaign_id = Some(snap.campaign.campaign_id.clone());
                    r
                })
                .ok()
        });
        Ok(export_datasheet(&snap.campaign, &balance, reliability.as_ref(), config))
    }
}

fn balance_of(snap: &Snapshot, tau: f64) -> Result<GroupBalanceReport, ServiceError> {
    let scores = match &snap.merged_design {
        Some(design) => compute_partial_scores(&snap.judgments, design)?,
        None => Vec::new(),
    };
    let declared: Vec<GroupId> = snap.campaign.registry.group_ids().cloned().collect();
    Ok(balance_report(&scores, &snap.aggregated, tau, &declared)?)
}

fn assignment_view(state: &CampaignState, assignment_id: &str) -> TaskAssignment {
    let rec = &state.assignments[assignment_id];
    let item = |id: &ItemId| {
        state
            .campaign
            .items
            .iter()
            .find(|i| &i.item_id == id)
            .cloned()
            .expect("assigned item exists")
    };
    let payload = match &rec.unit {
        Unit::Item { item_id } => TaskPayload::SubjectMatter {
            item: item(item_id),
            registry_version: state.campaign.registry.version,
            groups: state
                .campaign
                .registry
                .groups
                .iter()
                .map(|g| GroupSummary {
                    group_id: g.group_id.clone(),
                    display_name: g.display_name.clone(),
                    basis: g.basis,
                })
                .collect(),
        },
        Unit::Tuple { pool, tuple_id } => TaskPayload::Severity {
            pool: pool.clone(),
            tuple_id: tuple_id.clone(),
            items: state.pools[pool]
                .design
                .tuple(tuple_id)
                .expect("assigned tuple exists")
                .item_ids
                .iter()
                .map(item)
                .collect(),
        },
    };
    TaskAssignment {
        assignment_id: rec.assignment_id.clone(),
        annotator_id: rec.annotator_id.clone(),
        payload,
        issued_at: rec.issued_at,
        expires_at: rec.expires_at,
        instructions: state.policy().instructions.clone(),
    }
}
