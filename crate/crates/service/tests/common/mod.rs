#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use sevscale::model::{Basis, IdentityGroup, Phase, Pool};
use sevscale::{AnnotatorId, CampaignId, CampaignPolicy, IdentityRegistry, Item, ItemId, SubjectMatterLabel, Timestamp};
use sevscale_service::{Answer, ManualClock, Service, ServiceError, TaskPayload};

pub fn start() -> Timestamp {
    Utc.with_ymd_and_hms(2021, 6, 1, 9, 0, 0).unwrap()
}

pub fn policy() -> CampaignPolicy {
    CampaignPolicy {
        labelers_per_item: 3,
        annotators_per_tuple: 3,
        max_session_minutes: 600,
        max_daily_minutes: 1200,
        rng_seed: 7,
        ..CampaignPolicy::default()
    }
}

pub fn registry() -> IdentityRegistry {
    let group = |id: &str, basis, benign: &[&str]| IdentityGroup {
        group_id: id.into(),
        display_name: id.to_owned(),
        basis,
        abusive_terms: Vec::new(),
        benign_terms: benign.iter().map(|s| (*s).to_owned()).collect(),
    };
    IdentityRegistry::new(vec![
        group("women", Basis::Gender, &["women"]),
        group("muslims", Basis::Religion, &["muslim", "mosque"]),
    ])
    .unwrap()
}

pub fn women() -> SubjectMatterLabel {
    SubjectMatterLabel::identity_group(Some(Basis::Gender), Some("women".into()))
}

pub fn muslims() -> SubjectMatterLabel {
    SubjectMatterLabel::entity(Some("muslims".into()))
}

/// Items with the label every labeler gives them and a latent severity.
pub struct World {
    pub items: Vec<Item>,
    pub truth: BTreeMap<ItemId, BTreeSet<SubjectMatterLabel>>,
    pub severity: BTreeMap<ItemId, f64>,
}

pub fn world(per_group: &[(&str, usize)]) -> World {
    let mut w = World {
        items: Vec::new(),
        truth: BTreeMap::new(),
        severity: BTreeMap::new(),
    };
    let mut k = 0;
    for (group, count) in per_group {
        for i in 0..*count {
            let id = ItemId::new(format!("{group}-{i:02}"));
            let label = match *group {
                "women" => women(),
                "muslims" => muslims(),
                _ => SubjectMatterLabel::other(),
            };
            w.items.push(Item {
                item_id: id.clone(),
                text: format!("text about {group} number {i}"),
                source: "fixture".into(),
                collected_at: start(),
            });
            w.truth.insert(id.clone(), [label].into());
            w.severity.insert(id, (k * 37 % 101) as f64 / 100.0);
            k += 1;
        }
    }
    w
}

pub struct Fixture {
    pub clock: ManualClock,
    pub service: Service,
    pub campaign: CampaignId,
    pub world: World,
    pub annotators: Vec<AnnotatorId>,
}

pub fn enroll_all(service: &Service, campaign: &CampaignId, annotators: &[(&str, &[&str])]) -> Vec<AnnotatorId> {
    annotators
        .iter()
        .map(|(id, pools)| {
            let pools: BTreeSet<Pool> = pools.iter().map(|p| Pool::from((*p).to_owned())).collect();
            let invite = service.enroll(campaign, (*id).into(), pools).unwrap();
            service.consent(campaign, &invite.annotator_id, &invite.invite_code).unwrap();
            invite.annotator_id
        })
        .collect()
}

pub fn default_annotators() -> Vec<(&'static str, &'static [&'static str])> {
    vec![
        ("ann-1", &["women", "general"]),
        ("ann-2", &["women", "general"]),
        ("ann-3", &["women", "muslims"]),
        ("ann-4", &["muslims", "general"]),
        ("ann-5", &["muslims", "general"]),
    ]
}

pub fn fixture_with(service: Service, clock: ManualClock, per_group: &[(&str, usize)]) -> Fixture {
    let campaign = CampaignId::from("c1");
    service.create_campaign(campaign.clone(), policy()).unwrap();
    service.set_registry(&campaign, registry()).unwrap();
    let world = world(per_group);
    service.add_items(&campaign, world.items.clone()).unwrap();
    let annotators = enroll_all(&service, &campaign, &default_annotators());
    Fixture {
        clock,
        service,
        campaign,
        world,
        annotators,
    }
}

pub fn fixture(per_group: &[(&str, usize)]) -> Fixture {
    let clock = ManualClock::new(start());
    let service = Service::in_memory(Arc::new(clock.clone()));
    fixture_with(service, clock, per_group)
}

impl Fixture {
    pub fn answer(&self, payload: &TaskPayload) -> Answer {
        match payload {
            TaskPayload::SubjectMatter { item, .. } => Answer::SubjectMatter {
                labels: self.world.truth[&item.item_id].clone(),
            },
            TaskPayload::Severity { items, .. } => {
                let by = |a: &&Item, b: &&Item| self.world.severity[&a.item_id].total_cmp(&self.world.severity[&b.item_id]);
                Answer::Severity {
                    best: items.iter().max_by(by).unwrap().item_id.clone(),
                    worst: items.iter().min_by(by).unwrap().item_id.clone(),
                }
            }
        }
    }

    /// Every annotator takes and answers tasks until none is left. Returns
    /// the number of answers stored.
    pub fn drain(&self) -> usize {
        let mut stored = 0;
        loop {
            let mut progressed = false;
            for a in &self.annotators {
                match self.service.next_task(&self.campaign, a) {
                    Ok(task) => {
                        self.clock.advance(Duration::seconds(20));
                        let answer = self.answer(&task.payload);
                        self.service.submit(&self.campaign, a, &task.assignment_id, answer).unwrap();
                        stored += 1;
                        progressed = true;
                    }
                    Err(ServiceError::NoTaskAvailable) => {}
                    Err(e) => panic!("unexpected {e:?}"),
                }
            }
            if !progressed {
                return stored;
            }
        }
    }

    pub fn label_everything(&self) {
        self.service.open_phase(&self.campaign, Phase::SubjectMatter).unwrap();
        self.drain();
    }
}
