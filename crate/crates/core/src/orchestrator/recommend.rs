//! Choosing a KD method from the deployment context.
//!
//! The rules are plain data and can be replaced from a config file; the first
//! matching rule wins.

use serde::{Deserialize, Serialize};

use super::matrix::TeacherStrength;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdContext {
    pub teacher_strength: TeacherStrength,
    pub transfer_labeled: bool,
    pub student_data_available: bool,
    pub tuning_budget: bool,
}

impl KdContext {
    pub fn has_labeled_data(&self) -> bool {
        self.transfer_labeled || self.student_data_available
    }
}

/// Unset fields match anything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleCondition {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub teacher_strength: Option<Vec<TeacherStrength>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transfer_labeled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub student_data_available: Option<bool>,
    /// Labeled transfer data or the student's own data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labeled_data: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning_budget: Option<bool>,
}

impl RuleCondition {
    pub fn matches(&self, ctx: &KdContext) -> bool {
        let flag = |want: Option<bool>, have: bool| want.is_none_or(|w| w == have);
        self.teacher_strength
            .as_ref()
            .is_none_or(|s| s.contains(&ctx.teacher_strength))
            && flag(self.transfer_labeled, ctx.transfer_labeled)
            && flag(self.student_data_available, ctx.student_data_available)
            && flag(self.labeled_data, ctx.has_labeled_data())
            && flag(self.tuning_budget, ctx.tuning_budget)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub name: String,
    #[serde(default)]
    pub when: RuleCondition,
    pub method: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub fallback: String,
}

impl Default for RuleSet {
    fn default() -> Self {
        let rule = |name: &str, when, method: &str| Rule {
            name: name.into(),
            when,
            method: method.into(),
        };
        Self {
            rules: vec![
                // grid-tuned vanilla beats every fixed setting
                rule(
                    "tuning_budget",
                    RuleCondition {
                        tuning_budget: Some(true),
                        ..Default::default()
                    },
                    "tuned",
                ),
                // mutual learning helps with weaker teachers given labels
                rule(
                    "weak_teacher_with_labels",
                    RuleCondition {
                        teacher_strength: Some(vec![TeacherStrength::Weak]),
                        labeled_data: Some(true),
                        ..Default::default()
                    },
                    "dml",
                ),
                // mutual learning does poorly without labels
                rule(
                    "unlabeled_only",
                    RuleCondition {
                        labeled_data: Some(false),
                        ..Default::default()
                    },
                    "vanilla",
                ),
            ],
            fallback: "vanilla".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub method: String,
    /// Name of the matching rule, or `None` for the fallback.
    pub rule: Option<String>,
}

pub fn recommend_kd_method(ctx: &KdContext, rules: &RuleSet) -> Recommendation {
    match rules.rules.iter().find(|r| r.when.matches(ctx)) {
        Some(r) => Recommendation {
            method: r.method.clone(),
            rule: Some(r.name.clone()),
        },
        None => Recommendation {
            method: rules.fallback.clone(),
            rule: None,
        },
    }
}
