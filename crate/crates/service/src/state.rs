//! In-memory campaign state rebuilt from events, and the checks that decide
//! which events a command may append.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveTime};
use serde::{Deserialize, Serialize};
use sevscale::design::{BwsDesign, PairCount};
use sevscale::model::{validate_items, AnnotatorProfile, Campaign, Phase, Pool};
use sevscale::scoring::{check_choice, JudgmentLog};
use sevscale::{
    aggregate_labelings, generate_design, validate_label, AggregatedLabel, AnnotatorId, CampaignId,
    CampaignPolicy, GroupId, IdentityRegistry, Item, ItemId, ItemLabeling, Judgment, LabelVerdict, SubjectMatterLabel,
    Timestamp, TupleId,
};
use sha2::{Digest, Sha256};

use crate::error::{ExposureScope, ServiceError};
use crate::events::{Envelope, Event, PoolDesign, RoutingDecision, RoutingReason, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "how", rename_all = "kebab-case")]
pub enum Closure {
    Submitted { at: Timestamp },
    Released { at: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub assignment_id: String,
    pub annotator_id: AnnotatorId,
    pub unit: Unit,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub closed: Option<Closure>,
}

impl AssignmentRecord {
    pub fn is_live(&self, now: Timestamp) -> bool {
        self.closed.is_none() && now < self.expires_at
    }

    /// End of the lease as far as exposure is concerned.
    fn lease_end(&self, now: Timestamp) -> Timestamp {
        match self.closed {
            Some(Closure::Submitted { at } | Closure::Released { at }) => at.min(self.expires_at),
            None => now.min(self.expires_at),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnnotatorRecord {
    pub profile: AnnotatorProfile,
    pub invite_digest: String,
    pub token_digest: Option<String>,
    pub assignments: Vec<String>,
    /// Units answered, never handed out again.
    pub answered: BTreeSet<Unit>,
    /// Units returned without an answer, not offered to this annotator again.
    pub skipped: BTreeSet<Unit>,
}

#[derive(Debug)]
pub struct PoolState {
    pub design: BwsDesign,
    pub routing: Vec<RoutingDecision>,
    pub judgments: JudgmentLog,
    judgments_per_tuple: BTreeMap<TupleId, usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exposure {
    pub daily_seconds: i64,
    pub session_seconds: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingProgress {
    pub items_total: usize,
    pub items_complete: usize,
    pub labelings_collected: usize,
    pub labelings_required: usize,
    pub needs_adjudication: usize,
    pub adjudicated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolProgress {
    pub pool: Pool,
    pub items: usize,
    pub tuples_total: usize,
    pub tuples_complete: usize,
    pub judgments_collected: usize,
    /// Tuple count times annotators per tuple.
    pub judgments_required: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignStatus {
    pub campaign_id: CampaignId,
    pub phase: Option<Phase>,
    pub registry_version: u32,
    pub items: usize,
    pub annotators_enrolled: usize,
    pub annotators_consented: usize,
    pub subject_matter: LabelingProgress,
    pub severity: Vec<PoolProgress>,
    pub excluded_items: usize,
    /// Every severity pool has all of its judgments.
    pub severity_complete: bool,
}

/// Campaign state. Only [`CampaignState::apply`] mutates it.
#[derive(Debug)]
pub struct CampaignState {
    pub campaign: Campaign,
    pub annotators: BTreeMap<AnnotatorId, AnnotatorRecord>,
    pub labelings: Vec<ItemLabeling>,
    pub adjudicated: BTreeMap<ItemId, BTreeSet<SubjectMatterLabel>>,
    pub pools: BTreeMap<Pool, PoolState>,
    pub excluded: Vec<ItemId>,
    pub assignments: BTreeMap<String, AssignmentRecord>,
    labelings_per_item: BTreeMap<ItemId, usize>,
    labeled_by: BTreeSet<(ItemId, AnnotatorId)>,
    pub last_seq: u64,
}

pub fn digest(secret: &str) -> String {
    hex::encode(Sha256::digest(secret.as_bytes()))
}

/// Design seed for one pool, derived from the campaign seed.
pub fn pool_seed(campaign_seed: u64, pool: &Pool) -> u64 {
    let hash = Sha256::digest(format!("{campaign_seed}/{pool}").as_bytes());
    u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
}

fn next_midnight(now: Timestamp) -> Timestamp {
    (now.date_naive() + Duration::days(1)).and_time(NaiveTime::MIN).and_utc()
}

impl CampaignState {
    pub fn new(campaign_id: CampaignId, policy: CampaignPolicy) -> Self {
        Self {
            campaign: Campaign {
                campaign_id,
                phase: None,
                items: Vec::new(),
                registry: IdentityRegistry::default(),
                policy,
            },
            annotators: BTreeMap::new(),
            labelings: Vec::new(),
            adjudicated: BTreeMap::new(),
            pools: BTreeMap::new(),
            excluded: Vec::new(),
            assignments: BTreeMap::new(),
            labelings_per_item: BTreeMap::new(),
            labeled_by: BTreeSet::new(),
            last_seq: 0,
        }
    }

    /// Rebuilds state from a full event history.
    pub fn replay(events: &[Envelope]) -> Result<Self, ServiceError> {
        let Some(first) = events.first() else {
            return Err(ServiceError::Storage("empty campaign log".into()));
        };
        let Event::CampaignCreated { campaign_id, policy } = &first.event else {
            return Err(ServiceError::Storage("campaign log does not start with its creation".into()));
        };
        let mut state = Self::new(campaign_id.clone(), policy.clone());
        for e in events {
            state.apply(e);
        }
        Ok(state)
    }

    pub fn policy(&self) -> &CampaignPolicy {
        &self.campaign.policy
    }

    pub fn apply(&mut self, envelope: &Envelope) {
        self.last_seq = envelope.seq;
        let at = envelope.at;
        match &envelope.event {
            Event::CampaignCreated { .. } => {}
            Event::ItemsAdded { items } => self.campaign.items.extend(items.iter().cloned()),
            Event::RegistrySet { registry } => self.campaign.registry = registry.clone(),
            Event::AnnotatorEnrolled { profile, invite_digest } => {
                self.annotators.insert(
                    profile.annotator_id.clone(),
                    AnnotatorRecord {
                        profile: profile.clone(),
                        invite_digest: invite_digest.clone(),
                        token_digest: None,
                        assignments: Vec::new(),
                        answered: BTreeSet::new(),
                        skipped: BTreeSet::new(),
                    },
                );
            }
            Event::ConsentRecorded {
                annotator_id,
                token_digest,
            } => {
                if let Some(a) = self.annotators.get_mut(annotator_id) {
                    a.profile.consented_at.get_or_insert(at);
                    a.token_digest = Some(token_digest.clone());
                }
            }
            Event::PhaseOpened { phase, pools, excluded } => {
                self.campaign.phase = Some(*phase);
                for p in pools {
                    self.pools.insert(
                        p.pool.clone(),
                        PoolState {
                            design: p.design.clone(),
                            routing: p.routing.clone(),
                            judgments: JudgmentLog::in_memory(),
                            judgments_per_tuple: BTreeMap::new(),
                        },
                    );
                }
                self.excluded.extend(excluded.iter().cloned());
            }
            Event::Adjudicated { item_id, labels } => {
                self.adjudicated.insert(item_id.clone(), labels.clone());
            }
            Event::TaskIssued {
                assignment_id,
                annotator_id,
                unit,
                expires_at,
            } => {
                self.assignments.insert(
                    assignment_id.clone(),
                    AssignmentRecord {
                        assignment_id: assignment_id.clone(),
                        annotator_id: annotator_id.clone(),
                        unit: unit.clone(),
                        issued_at: at,
                        expires_at: *expires_at,
                        closed: None,
                    },
                );
                if let Some(a) = self.annotators.get_mut(annotator_id) {
                    a.assignments.push(assignment_id.clone());
                }
            }
            Event::TaskReleased { assignment_id } => {
                if let Some(rec) = self.assignments.get_mut(assignment_id) {
                    rec.closed = Some(Closure::Released { at });
                    if let Some(a) = self.annotators.get_mut(&rec.annotator_id) {
                        a.skipped.insert(rec.unit.clone());
                    }
                }
            }
            Event::LabelingRecorded {
                assignment_id,
                labeling,
            } => {
                self.close_submitted(assignment_id, at);
                *self.labelings_per_item.entry(labeling.item_id.clone()).or_default() += 1;
                self.labeled_by
                    .insert((labeling.item_id.clone(), labeling.annotator_id.clone()));
                self.labelings.push(labeling.clone());
            }
            Event::JudgmentRecorded {
                assignment_id,
                pool,
                judgment,
            } => {
                self.close_submitted(assignment_id, at);
                if let Some(p) = self.pools.get_mut(pool) {
                    match p.judgments.record(judgment.clone(), &p.design) {
                        Ok(()) => *p.judgments_per_tuple.entry(judgment.tuple_id.clone()).or_default() += 1,
                        Err(e) => tracing::error!(judgment = %judgment.judgment_id, error = %e, "logged judgment rejected on replay"),
                    }
                }
            }
        }
    }

    fn close_submitted(&mut self, assignment_id: &str, at: Timestamp) {
        if let Some(rec) = self.assignments.get_mut(assignment_id) {
            rec.closed = Some(Closure::Submitted { at });
            if let Some(a) = self.annotators.get_mut(&rec.annotator_id) {
                a.answered.insert(rec.unit.clone());
            }
        }
    }

    fn require_phase_before_severity(&self, what: &str) -> Result<(), ServiceError> {
        match self.campaign.phase {
            None | Some(Phase::SubjectMatter) => Ok(()),
            Some(p) => Err(ServiceError::PhaseOrderViolation(format!("cannot {what} during {p:?}"))),
        }
    }

    pub fn decide_add_items(&self, items: Vec<Item>) -> Result<Event, ServiceError> {
        self.require_phase_before_severity("add items")?;
        let mut all = self.campaign.items.clone();
        all.extend(items.iter().cloned());
        validate_items(&all)?;
        Ok(Event::ItemsAdded { items })
    }

    pub fn decide_set_registry(&self, registry: IdentityRegistry) -> Result<Event, ServiceError> {
        self.require_phase_before_severity("change the registry")?;
        registry.validate().map_err(|e| ServiceError::Registry(e.to_string()))?;
        let current = &self.campaign.registry;
        if !current.groups.is_empty() {
            if registry.version <= current.version {
                return Err(ServiceError::Registry(format!(
                    "version {} does not follow current version {}",
                    registry.version, current.version
                )));
            }
            registry
                .check_supersedes(current)
                .map_err(|e| ServiceError::Registry(e.to_string()))?;
        }
        Ok(Event::RegistrySet { registry })
    }

    pub fn decide_enroll(
        &self,
        annotator_id: AnnotatorId,
        pools: BTreeSet<Pool>,
        invite_code: &str,
    ) -> Result<Event, ServiceError> {
        if self.annotators.contains_key(&annotator_id) {
            return Err(ServiceError::AnnotatorExists(annotator_id));
        }
        for pool in &pools {
            if let Pool::Group(g) = pool {
                if self.campaign.registry.group(g).is_none() {
                    return Err(ServiceError::UnknownPool(pool.clone()));
                }
            }
        }
        Ok(Event::AnnotatorEnrolled {
            profile: AnnotatorProfile::new(annotator_id, pools),
            invite_digest: digest(invite_code),
        })
    }

    pub fn decide_consent(&self, annotator_id: &AnnotatorId, invite_code: &str, token: &str) -> Result<Event, ServiceError> {
        let rec = self
            .annotators
            .get(annotator_id)
            .ok_or_else(|| ServiceError::AnnotatorNotFound(annotator_id.clone()))?;
        if rec.invite_digest != digest(invite_code) {
            return Err(ServiceError::InvalidInvite);
        }
        Ok(Event::ConsentRecorded {
            annotator_id: annotator_id.clone(),
            token_digest: digest(token),
        })
    }

    pub fn authenticate(&self, token: &str) -> Result<AnnotatorId, ServiceError> {
        let d = digest(token);
        self.annotators
            .values()
            .find(|a| a.token_digest.as_deref() == Some(d.as_str()))
            .map(|a| a.profile.annotator_id.clone())
            .ok_or(ServiceError::Unauthorized)
    }

    fn labeling_count(&self, item: &ItemId) -> usize {
        self.labelings_per_item.get(item).copied().unwrap_or(0)
    }

    /// Majority labels of fully labeled items, with adjudications applied.
    pub fn aggregated(&self) -> BTreeMap<ItemId, AggregatedLabel> {
        let required = self.policy().labelers_per_item;
        let complete: Vec<ItemLabeling> = self
            .labelings
            .iter()
            .filter(|l| self.labeling_count(&l.item_id) >= required)
            .cloned()
            .collect();
        let mut out = aggregate_labelings(&complete, self.policy()).unwrap_or_else(|e| {
            tracing::error!(error = %e, "stored labelings failed to aggregate");
            BTreeMap::new()
        });
        for (item, labels) in &self.adjudicated {
            let labelers = out.get(item).map_or(0, |a| a.labelers);
            let mut agg = AggregatedLabel::adjudicated(item.clone(), labels.clone());
            agg.labelers = labelers;
            out.insert(item.clone(), agg);
        }
        out
    }

    pub fn decide_adjudicate(
        &self,
        item_id: ItemId,
        labels: BTreeSet<SubjectMatterLabel>,
    ) -> Result<Event, ServiceError> {
        self.require_phase_before_severity("adjudicate")?;
        if labels.is_empty() {
            return Err(ServiceError::EmptyLabeling);
        }
        self.check_labels(&labels)?;
        match self.aggregated().get(&item_id) {
            Some(agg) if agg.needs_adjudication || self.adjudicated.contains_key(&item_id) => {}
            _ => return Err(ServiceError::NotAdjudicable(item_id)),
        }
        Ok(Event::Adjudicated { item_id, labels })
    }

    fn check_labels(&self, labels: &BTreeSet<SubjectMatterLabel>) -> Result<(), ServiceError> {
        for label in labels {
            if let LabelVerdict::Invalid(violation) = validate_label(label, &self.campaign.registry) {
                return Err(ServiceError::InvalidLabel {
                    label: label.to_string(),
                    violation,
                });
            }
        }
        Ok(())
    }

    pub fn decide_open_phase(&self, phase: Phase) -> Result<Event, ServiceError> {
        let current = self.campaign.phase;
        match (current, phase) {
            (None, Phase::SubjectMatter) => Ok(Event::PhaseOpened {
                phase,
                pools: Vec::new(),
                excluded: Vec::new(),
            }),
            (Some(Phase::SubjectMatter), Phase::Severity) => self.plan_severity(),
            (Some(Phase::Severity), Phase::Closed) => Ok(Event::PhaseOpened {
                phase,
                pools: Vec::new(),
                excluded: Vec::new(),
            }),
            (current, phase) => Err(ServiceError::PhaseOrderViolation(format!(
                "cannot open {phase:?} from {}",
                current.map_or("a fresh campaign".to_owned(), |p| format!("{p:?}"))
            ))),
        }
    }

    fn plan_severity(&self) -> Result<Event, ServiceError> {
        let required = self.policy().labelers_per_item;
        let unlabeled: Vec<&ItemId> = self
            .campaign
            .items
            .iter()
            .map(|i| &i.item_id)
            .filter(|id| self.labeling_count(id) < required)
            .collect();
        if let Some(first) = unlabeled.first() {
            return Err(ServiceError::PhaseOrderViolation(format!(
                "{} items still need subject-matter labels (first: `{first}`)",
                unlabeled.len()
            )));
        }
        let aggregated = self.aggregated();
        let (routable, excluded): (Vec<&Item>, Vec<&Item>) = self
            .campaign
            .items
            .iter()
            .partition(|i| aggregated.get(&i.item_id).is_some_and(|a| !a.needs_adjudication));
        let n = self.policy().tuple_size;
        let routed = route(routable.iter().map(|i| (&i.item_id, &aggregated[&i.item_id])), n);

        let mut pools = Vec::new();
        for (pool, routing) in routed {
            let ids: Vec<ItemId> = routing.iter().map(|r| r.item_id.clone()).collect();
            let design = generate_design(&ids, n, self.policy().tuple_multiplier, pool_seed(self.policy().rng_seed, &pool))
                .map_err(|source| ServiceError::Design {
                    pool: pool.clone(),
                    source,
                })?;
            pools.push(PoolDesign { pool, routing, design });
        }
        Ok(Event::PhaseOpened {
            phase: Phase::Severity,
            pools,
            excluded: excluded.into_iter().map(|i| i.item_id.clone()).collect(),
        })
    }

    /// Exposure seconds for today and the current session. Leases count from
    /// issue until submit, release or expiry; open leases count until `now`.
    pub fn exposure(&self, annotator: &AnnotatorRecord, now: Timestamp) -> (Exposure, Option<Timestamp>) {
        let today = now.date_naive();
        let brk = Duration::minutes(self.policy().session_break_minutes as i64);
        let mut leases: Vec<(Timestamp, Timestamp)> = annotator
            .assignments
            .iter()
            .filter_map(|id| self.assignments.get(id))
            .map(|a| (a.issued_at, a.lease_end(now)))
            .collect();
        leases.sort();
        let mut exposure = Exposure::default();
        let mut session = 0i64;
        let mut last_end: Option<Timestamp> = None;
        for (start, end) in leases {
            let secs = (end - start).num_seconds().max(0);
            if start.date_naive() == today {
                exposure.daily_seconds += secs;
            }
            if last_end.is_some_and(|prev| start - prev >= brk) {
                session = 0;
            }
            session += secs;
            last_end = Some(last_end.map_or(end, |prev| prev.max(end)));
        }
        if last_end.is_some_and(|prev| now - prev < brk) {
            exposure.session_seconds = session;
        }
        (exposure, last_end)
    }

    /// Remaining exposure budget, or the limit that is exhausted.
    fn remaining_budget(&self, annotator: &AnnotatorRecord, now: Timestamp) -> Result<Duration, ServiceError> {
        let (exposure, last_end) = self.exposure(annotator, now);
        let policy = self.policy();
        let daily = policy.max_daily_minutes as i64 * 60 - exposure.daily_seconds;
        let session = policy.max_session_minutes as i64 * 60 - exposure.session_seconds;
        if daily <= 0 {
            return Err(ServiceError::ExposureLimitReached {
                scope: ExposureScope::Daily,
                resume_at: next_midnight(now),
            });
        }
        if session <= 0 {
            let resume_at = last_end.unwrap_or(now) + Duration::minutes(policy.session_break_minutes as i64);
            return Err(ServiceError::ExposureLimitReached {
                scope: ExposureScope::Session,
                resume_at,
            });
        }
        Ok(Duration::seconds(daily.min(session)))
    }

    fn live_leases(&self, now: Timestamp) -> BTreeMap<&Unit, usize> {
        let mut out = BTreeMap::new();
        for a in self.assignments.values().filter(|a| a.is_live(now)) {
            *out.entry(&a.unit).or_default() += 1;
        }
        out
    }

    /// The annotator's live assignment, if any.
    pub fn live_assignment(&self, annotator: &AnnotatorId, now: Timestamp) -> Option<&AssignmentRecord> {
        self.annotators
            .get(annotator)?
            .assignments
            .iter()
            .filter_map(|id| self.assignments.get(id))
            .find(|a| a.is_live(now))
    }

    /// Least-served open unit the annotator may answer.
    fn pick_unit(&self, annotator: &AnnotatorRecord, now: Timestamp) -> Option<Unit> {
        let live = self.live_leases(now);
        let fresh = |unit: &Unit| !annotator.answered.contains(unit) && !annotator.skipped.contains(unit);
        match self.campaign.phase {
            Some(Phase::SubjectMatter) => {
                let required = self.policy().labelers_per_item;
                self.campaign
                    .items
                    .iter()
                    .enumerate()
                    .filter_map(|(index, item)| {
                        if self.labeled_by.contains(&(item.item_id.clone(), annotator.profile.annotator_id.clone())) {
                            return None;
                        }
                        let unit = Unit::Item {
                            item_id: item.item_id.clone(),
                        };
                        let served = self.labeling_count(&item.item_id) + live.get(&unit).copied().unwrap_or(0);
                        (served < required && fresh(&unit)).then_some(((served, index), unit))
                    })
                    .min_by(|a, b| a.0.cmp(&b.0))
                    .map(|(_, unit)| unit)
            }
            Some(Phase::Severity) => {
                let required = self.policy().annotators_per_tuple;
                annotator
                    .profile
                    .pools
                    .iter()
                    .filter_map(|pool| self.pools.get(pool).map(|p| (pool, p)))
                    .flat_map(|(pool, p)| {
                        p.design.tuples.iter().enumerate().map(move |(index, t)| (pool, p, index, t))
                    })
                    .filter_map(|(pool, p, index, t)| {
                        let unit = Unit::Tuple {
                            pool: pool.clone(),
                            tuple_id: t.tuple_id.clone(),
                        };
                        let done = p.judgments_per_tuple.get(&t.tuple_id).copied().unwrap_or(0);
                        let served = done + live.get(&unit).copied().unwrap_or(0);
                        (served < required && fresh(&unit)).then_some(((served, index, pool.clone()), unit))
                    })
                    .min_by(|a, b| a.0.cmp(&b.0))
                    .map(|(_, unit)| unit)
            }
            _ => None,
        }
    }

    pub fn next_assignment_id(&self) -> String {
        format!("a{:06}", self.assignments.len() + 1)
    }

    /// `Ok(None)` when the annotator already holds a live assignment.
    pub fn decide_next_task(&self, annotator_id: &AnnotatorId, now: Timestamp) -> Result<Option<Event>, ServiceError> {
        let annotator = self
            .annotators
            .get(annotator_id)
            .ok_or_else(|| ServiceError::AnnotatorNotFound(annotator_id.clone()))?;
        if !annotator.profile.may_receive_tasks() {
            return Err(ServiceError::ConsentRequired);
        }
        if self.live_assignment(annotator_id, now).is_some() {
            return Ok(None);
        }
        let budget = self.remaining_budget(annotator, now)?;
        let unit = self.pick_unit(annotator, now).ok_or(ServiceError::NoTaskAvailable)?;
        let lease = Duration::minutes(self.policy().lease_minutes as i64).min(budget);
        Ok(Some(Event::TaskIssued {
            assignment_id: self.next_assignment_id(),
            annotator_id: annotator_id.clone(),
            unit,
            expires_at: now + lease,
        }))
    }

    fn owned_live(&self, annotator_id: &AnnotatorId, assignment_id: &str, now: Timestamp) -> Result<&AssignmentRecord, ServiceError> {
        let rec = self
            .assignments
            .get(assignment_id)
            .ok_or_else(|| ServiceError::AssignmentNotFound(assignment_id.to_owned()))?;
        if &rec.annotator_id != annotator_id {
            return Err(ServiceError::NotOwner(assignment_id.to_owned()));
        }
        match rec.closed {
            Some(Closure::Submitted { .. }) => Err(ServiceError::AlreadySubmitted(assignment_id.to_owned())),
            Some(Closure::Released { .. }) => Err(ServiceError::AssignmentExpired(assignment_id.to_owned())),
            None if now >= rec.expires_at => Err(ServiceError::AssignmentExpired(assignment_id.to_owned())),
            None => Ok(rec),
        }
    }

    pub fn decide_submit(
        &self,
        annotator_id: &AnnotatorId,
        assignment_id: &str,
        answer: Answer,
        now: Timestamp,
    ) -> Result<Event, ServiceError> {
        let rec = self.owned_live(annotator_id, assignment_id, now)?;
        match (&rec.unit, answer) {
            (Unit::Item { item_id }, Answer::SubjectMatter { labels }) => {
                if self.campaign.phase != Some(Phase::SubjectMatter) {
                    return Err(ServiceError::PhaseOrderViolation("subject-matter phase is closed".into()));
                }
                if labels.is_empty() {
                    return Err(ServiceError::EmptyLabeling);
                }
                self.check_labels(&labels)?;
                Ok(Event::LabelingRecorded {
                    assignment_id: assignment_id.to_owned(),
                    labeling: ItemLabeling {
                        item_id: item_id.clone(),
                        labels,
                        annotator_id: annotator_id.clone(),
                        labeled_at: now,
                    },
                })
            }
            (Unit::Tuple { pool, tuple_id }, Answer::Severity { best, worst }) => {
                if self.campaign.phase != Some(Phase::Severity) {
                    return Err(ServiceError::PhaseOrderViolation("severity phase is not open".into()));
                }
                let p = &self.pools[pool];
                let tuple = p
                    .design
                    .tuple(tuple_id)
                    .ok_or_else(|| sevscale::scoring::JudgmentError::UnknownTuple(tuple_id.clone()))?;
                check_choice(tuple, &best, &worst)?;
                Ok(Event::JudgmentRecorded {
                    assignment_id: assignment_id.to_owned(),
                    pool: pool.clone(),
                    judgment: Judgment {
                        judgment_id: assignment_id.into(),
                        tuple_id: tuple_id.clone(),
                        annotator_id: annotator_id.clone(),
                        best,
                        worst,
                        submitted_at: now,
                    },
                })
            }
            _ => Err(ServiceError::WrongAnswerKind),
        }
    }

    pub fn decide_release(&self, annotator_id: &AnnotatorId, assignment_id: &str, now: Timestamp) -> Result<Event, ServiceError> {
        self.owned_live(annotator_id, assignment_id, now)?;
        Ok(Event::TaskReleased {
            assignment_id: assignment_id.to_owned(),
        })
    }

    /// Progress summary from the running counters.
    pub fn status(&self) -> CampaignStatus {
        let per_item = &self.labelings_per_item;
        let per_tuple: BTreeMap<(&Pool, &TupleId), usize> = self
            .pools
            .iter()
            .flat_map(|(pool, p)| p.judgments_per_tuple.iter().map(move |(t, c)| ((pool, t), *c)))
            .collect();
        self.status_from(per_item, &per_tuple)
    }

    /// Progress summary recounted from the stored labelings and judgments.
    pub fn recount_status(&self) -> CampaignStatus {
        let mut per_item: BTreeMap<ItemId, usize> = BTreeMap::new();
        for l in &self.labelings {
            *per_item.entry(l.item_id.clone()).or_default() += 1;
        }
        let mut per_tuple: BTreeMap<(&Pool, &TupleId), usize> = BTreeMap::new();
        for (pool, p) in &self.pools {
            for j in p.judgments.judgments() {
                *per_tuple.entry((pool, &j.tuple_id)).or_default() += 1;
            }
        }
        self.status_from(&per_item, &per_tuple)
    }

    fn status_from(
        &self,
        per_item: &BTreeMap<ItemId, usize>,
        per_tuple: &BTreeMap<(&Pool, &TupleId), usize>,
    ) -> CampaignStatus {
        let policy = self.policy();
        let items = &self.campaign.items;
        let aggregated = self.aggregated();
        let subject_matter = LabelingProgress {
            items_total: items.len(),
            items_complete: items
                .iter()
                .filter(|i| per_item.get(&i.item_id).copied().unwrap_or(0) >= policy.labelers_per_item)
                .count(),
            labelings_collected: per_item.values().sum(),
            labelings_required: items.len() * policy.labelers_per_item,
            needs_adjudication: aggregated.values().filter(|a| a.needs_adjudication).count(),
            adjudicated: self.adjudicated.len(),
        };
        let severity: Vec<PoolProgress> = self
            .pools
            .iter()
            .map(|(pool, p)| {
                let counts: Vec<usize> = p
                    .design
                    .tuples
                    .iter()
                    .map(|t| per_tuple.get(&(pool, &t.tuple_id)).copied().unwrap_or(0))
                    .collect();
                PoolProgress {
                    pool: pool.clone(),
                    items: p.design.item_count,
                    tuples_total: p.design.tuple_count,
                    tuples_complete: counts.iter().filter(|&&c| c >= policy.annotators_per_tuple).count(),
                    judgments_collected: counts.iter().sum(),
                    judgments_required: p.design.tuple_count * policy.annotators_per_tuple,
                }
            })
            .collect();
        CampaignStatus {
            campaign_id: self.campaign.campaign_id.clone(),
            phase: self.campaign.phase,
            registry_version: self.campaign.registry.version,
            items: items.len(),
            annotators_enrolled: self.annotators.len(),
            annotators_consented: self
                .annotators
                .values()
                .filter(|a| a.profile.may_receive_tasks())
                .count(),
            subject_matter,
            severity_complete: !severity.is_empty()
                && severity.iter().all(|p| p.tuples_complete == p.tuples_total),
            severity,
            excluded_items: self.excluded.len(),
        }
    }

    /// All severity pools as one design; pools hold disjoint items.
    pub fn merged_design(&self) -> Option<BwsDesign> {
        let mut designs = self.pools.values().map(|p| &p.design);
        let first = designs.next()?.clone();
        let mut merged = designs.fold(first, |mut acc, d| {
            acc.items.extend(d.items.iter().cloned());
            acc.tuples.extend(d.tuples.iter().cloned());
            acc.appearance_counts.extend(d.appearance_counts.iter().map(|(k, v)| (k.clone(), *v)));
            acc.pair_counts.extend(d.pair_counts.iter().cloned());
            acc.extra_appearance_items.extend(d.extra_appearance_items.iter().cloned());
            acc.pair_bound = acc.pair_bound.max(d.pair_bound);
            acc.max_pair_count = acc.max_pair_count.max(d.max_pair_count);
            acc.pair_target_met &= d.pair_target_met;
            acc
        });
        merged.design_id = format!("{}:all", self.campaign.campaign_id);
        merged.item_count = merged.items.len();
        merged.tuple_count = merged.tuples.len();
        merged.seed = self.policy().rng_seed;
        merged.pair_counts.sort_by(|a: &PairCount, b: &PairCount| (&a.a, &a.b).cmp(&(&b.a, &b.b)));
        Some(merged)
    }

    pub fn judgments(&self) -> Vec<Judgment> {
        self.pools.values().flat_map(|p| p.judgments.judgments().iter().cloned()).collect()
    }
}

/// Answer to an assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Answer {
    SubjectMatter { labels: BTreeSet<SubjectMatterLabel> },
    Severity { best: ItemId, worst: ItemId },
}

/// Assigns routable items to pools.
///
/// One identity group routes to that group's pool, none to the general pool.
/// Items spanning several groups go, in item order, to the candidate pool with
/// the fewest items so far (ties by group id). Group pools smaller than a tuple
/// are folded into the general pool.
pub fn route<'a>(
    items: impl Iterator<Item = (&'a ItemId, &'a AggregatedLabel)>,
    tuple_size: usize,
) -> BTreeMap<Pool, Vec<RoutingDecision>> {
    let mut pools: BTreeMap<Pool, Vec<RoutingDecision>> = BTreeMap::new();
    let mut multi = Vec::new();
    for (item_id, agg) in items {
        let groups: Vec<GroupId> = agg.groups().into_iter().cloned().collect();
        match groups.len() {
            0 => pools.entry(Pool::General).or_default().push(RoutingDecision {
                item_id: item_id.clone(),
                pool: Pool::General,
                candidates: groups,
                reason: RoutingReason::NoGroup,
            }),
            1 => {
                let pool = Pool::Group(groups[0].clone());
                pools.entry(pool.clone()).or_default().push(RoutingDecision {
                    item_id: item_id.clone(),
                    pool,
                    candidates: groups,
                    reason: RoutingReason::SingleGroup,
                });
            }
            _ => multi.push((item_id, groups)),
        }
    }
    for (item_id, groups) in multi {
        let target = groups
            .iter()
            .min_by_key(|g| (pools.get(&Pool::Group((*g).clone())).map_or(0, Vec::len), (*g).clone()))
            .expect("several groups")
            .clone();
        let pool = Pool::Group(target);
        pools.entry(pool.clone()).or_default().push(RoutingDecision {
            item_id: item_id.clone(),
            pool,
            candidates: groups,
            reason: RoutingReason::FewestPending,
        });
    }
    let small: Vec<Pool> = pools
        .iter()
        .filter(|(pool, items)| **pool != Pool::General && items.len() < tuple_size)
        .map(|(pool, _)| pool.clone())
        .collect();
    for pool in small {
        for mut decision in pools.remove(&pool).unwrap_or_default() {
            decision.pool = Pool::General;
            decision.reason = RoutingReason::PoolTooSmall;
            pools.entry(Pool::General).or_default().push(decision);
        }
    }
    pools
}

#[cfg(test)]
mod tests {
    use super::*;
    use sevscale::model::Basis;

    fn agg(item: &str, groups: &[&str]) -> (ItemId, AggregatedLabel) {
        let labels = if groups.is_empty() {
            [SubjectMatterLabel::other()].into()
        } else {
            groups
                .iter()
                .map(|g| SubjectMatterLabel::identity_group(Some(Basis::Religion), Some((*g).into())))
                .collect()
        };
        (item.into(), AggregatedLabel::adjudicated(item.into(), labels))
    }

    fn pools_of(routed: &BTreeMap<Pool, Vec<RoutingDecision>>) -> BTreeMap<String, Vec<String>> {
        routed
            .iter()
            .map(|(p, d)| (p.to_string(), d.iter().map(|r| r.item_id.to_string()).collect()))
            .collect()
    }

    #[test]
    fn routes_by_group_and_balances_multi_group_items() {
        let input = [
            agg("a", &["jews"]),
            agg("b", &["jews"]),
            agg("c", &["muslims"]),
            agg("d", &["jews", "muslims"]),
            agg("e", &["jews", "muslims"]),
            agg("f", &[]),
        ];
        let routed = route(input.iter().map(|(i, a)| (i, a)), 2);
        let got = pools_of(&routed);
        assert_eq!(got["jews"], ["a", "b", "e"]);
        assert_eq!(got["muslims"], ["c", "d"]);
        assert_eq!(got["general"], ["f"]);
        let d = routed[&Pool::Group("muslims".into())].iter().find(|r| r.item_id.as_str() == "d").unwrap();
        assert_eq!(d.reason, RoutingReason::FewestPending);
        assert_eq!(d.candidates.len(), 2);
    }

    #[test]
    fn small_group_pools_fold_into_general() {
        let input = [agg("a", &["jews"]), agg("b", &[]), agg("c", &[]), agg("d", &[])];
        let routed = route(input.iter().map(|(i, a)| (i, a)), 4);
        assert_eq!(routed.len(), 1);
        let general = &routed[&Pool::General];
        assert_eq!(general.len(), 4);
        assert_eq!(general[3].reason, RoutingReason::PoolTooSmall);
    }

    #[test]
    fn pool_seeds_differ() {
        assert_ne!(pool_seed(1, &Pool::General), pool_seed(1, &Pool::Group("jews".into())));
        assert_eq!(pool_seed(1, &Pool::General), pool_seed(1, &Pool::General));
    }
}
