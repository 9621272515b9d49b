//! The observe-think-act episode loop.

mod action;
mod episode;
mod prompt;
mod store;
mod thought;

pub use action::{parse_action, Action, ScrollTarget, Unparseable};
pub use episode::{
    apply_action, evaluate_reward, parse_model_output, run_episode, AgentTask, Applied, EpisodeConfig, FixturePredicate,
    ModelPolicy, Policy, PolicyError, RewardCheck, ScriptedPolicy, Step, Termination, Trajectory, DEFAULT_MAX_STEPS,
    MAX_UNPARSEABLE,
};
pub use prompt::{build_prompt, system_prompt, Prompt, DEFAULT_IMAGE_WINDOW, PROMPT_VERSION};
pub use store::{read_trajectory, step_image_name, write_trajectory, StepRecord, TrajectoryRecord};
pub use thought::{Thought, ThoughtSection, COT_SECTIONS};

#[cfg(test)]
mod tests {
    use std::time::Instant;

    use super::*;
    use crate::browser::fake::{FakeBrowser, FIXTURE_PRODUCTS, FIXTURE_ROOT};
    use crate::browser::{Browser, DEFAULT_SETTLE};
    use crate::observation::compose_observation;

    fn id_of(b: &mut FakeBrowser, url: &str, role: &str, name: &str) -> u32 {
        b.navigate(url, DEFAULT_SETTLE).unwrap();
        let obs = compose_observation(b, 1).unwrap();
        obs.ax.nodes().iter().find(|n| n.role == role && n.name == name).unwrap().id
    }

    fn task() -> AgentTask {
        AgentTask {
            task_id: "buy".into(),
            query: "Buy the product".into(),
            start_url: FIXTURE_ROOT.into(),
            check: Some(FixturePredicate::All {
                of: vec![
                    FixturePredicate::UrlEquals { url: FIXTURE_PRODUCTS.into() },
                    FixturePredicate::AxContains { role: "StaticText".into(), name: "bought".into() },
                ],
            }),
        }
    }

    fn cot(action: &str) -> String {
        format!(
            "## Webpage Layout Description\nA page.\n## Key Element Analysis\nSome links.\n## Task Recap\nBuy.\n\
## Task Decomposition\nGo to products, buy.\n## Step-by-Step Reasoning\nNext step.\n## Final Action Summary\n{action}"
        )
    }

    #[test]
    fn scripted_policy_completes_fixture_task() {
        let mut b = FakeBrowser::fixture();
        let products = id_of(&mut b, FIXTURE_ROOT, "link", "Products");
        let buy = id_of(&mut b, FIXTURE_PRODUCTS, "button", "Buy");
        let mut policy =
            ScriptedPolicy::new([cot(&format!("click [{products}]")), cot(&format!("click [{buy}]")), cot("stop [bought]")]);
        let t = task();
        let mut traj = run_episode(&t, &mut policy, &mut b, &EpisodeConfig::default());
        assert_eq!(traj.termination, Termination::Stopped);
        assert_eq!(traj.steps.len(), 3);
        traj.reward = evaluate_reward(&traj, &RewardCheck::Fixture(t.check.clone().unwrap())).unwrap();
        assert_eq!(traj.reward, 1);
        assert!(traj.is_well_formed());
        assert_eq!(traj.steps[2].thought.section("Task Recap"), "Buy.");
        let steps: Vec<u32> = traj.steps.iter().map(|s| s.observation.step).collect();
        assert_eq!(steps, vec![1, 2, 3]);
    }

    #[test]
    fn non_stopping_policy_hits_step_limit() {
        let mut b = FakeBrowser::fixture();
        let mut policy = ScriptedPolicy::repeating("scroll [WINDOW] [down]");
        let t = task();
        let mut traj = run_episode(&t, &mut policy, &mut b, &EpisodeConfig { max_steps: 15, ..Default::default() });
        assert_eq!(traj.termination, Termination::MaxSteps);
        assert_eq!(traj.steps.len(), 15);
        traj.reward = evaluate_reward(&traj, &RewardCheck::Fixture(t.check.unwrap())).unwrap();
        assert_eq!(traj.reward, 0);
        assert!(policy.prompts.iter().all(|p| p.images.len() <= DEFAULT_IMAGE_WINDOW));
        assert_eq!(policy.prompts[4].image_steps, vec![3, 4, 5]);
    }

    #[test]
    fn garbage_three_times_is_an_error() {
        let mut b = FakeBrowser::fixture();
        let mut policy = ScriptedPolicy::repeating("I am not sure what to do");
        let traj = run_episode(&task(), &mut policy, &mut b, &EpisodeConfig::default());
        assert_eq!(traj.termination, Termination::Error);
        assert_eq!(traj.rejected.len(), 3);
        assert!(traj.steps.is_empty());
        assert!(policy.prompts[1].correction.is_some());
    }

    #[test]
    fn unresolvable_target_is_a_note() {
        let mut b = FakeBrowser::fixture();
        let mut policy = ScriptedPolicy::new(["click [9999]", "stop [done]"]);
        let traj = run_episode(&task(), &mut policy, &mut b, &EpisodeConfig::default());
        assert_eq!(traj.termination, Termination::Stopped);
        assert_eq!(traj.steps.len(), 2);
        assert!(traj.steps[0].note.as_deref().unwrap().contains("9999"));
        assert_eq!(traj.steps[1].observation.step, 2);
        assert_eq!(traj.answer.as_deref(), Some("done"));
        assert!(policy.prompts[1].user_text().contains("Result: element [9999]"));
    }

    #[test]
    fn wait_lasts_a_second_and_restart_returns_home() {
        let mut b = FakeBrowser::fixture();
        let products = id_of(&mut b, FIXTURE_ROOT, "link", "Products");
        let mut policy = ScriptedPolicy::new([format!("click [{products}]"), "wait".into(), "restart".into(), "stop [x]".into()]);
        let start = Instant::now();
        let traj = run_episode(&task(), &mut policy, &mut b, &EpisodeConfig::default());
        assert!(start.elapsed().as_millis() >= 1000);
        assert_eq!(traj.steps[1].observation.url, FIXTURE_PRODUCTS);
        assert_eq!(traj.steps[3].observation.url, FIXTURE_ROOT);
    }

    #[test]
    fn first_prompt_shape() {
        let mut b = FakeBrowser::fixture();
        b.navigate(FIXTURE_ROOT, DEFAULT_SETTLE).unwrap();
        let obs = compose_observation(&mut b, 1).unwrap();
        let p = build_prompt("q", &obs, &[], 3);
        assert_eq!(p.images.len(), 1);
        assert!(p.user_text().contains(&obs.ax_text));
        for h in COT_SECTIONS {
            assert!(p.system.contains(h));
        }
        let msgs = p.to_messages();
        assert_eq!(msgs.len(), 2);
        assert!(msgs[0].images.is_empty());
    }

    #[test]
    fn judge_reward_maps_verdict() {
        use std::sync::Arc;
        let traj = Trajectory {
            query: "q".into(),
            initial_url: FIXTURE_ROOT.into(),
            steps: vec![],
            termination: Termination::Stopped,
            reward: 0,
            answer: Some("a".into()),
            rejected: vec![],
            error: None,
        };
        let client = crate::model::ModelClient::new(
            Arc::new(crate::model::ScriptedChat::texts(["SUCCESS"])),
            crate::model::ModelConfig { endpoint: "mock".into(), model_name: "j".into(), params: Default::default() },
        );
        let r = evaluate_reward(&traj, &RewardCheck::Judge { client, rubric: Default::default() }).unwrap();
        assert_eq!(r, 1);
    }

    #[test]
    fn trajectory_store_round_trip() {
        let mut b = FakeBrowser::fixture();
        let mut policy = ScriptedPolicy::new(["scroll [WINDOW] [down]", "stop [ok]"]);
        let traj = run_episode(&task(), &mut policy, &mut b, &EpisodeConfig::default());
        let dir = tempfile::tempdir().unwrap();
        write_trajectory(dir.path(), &traj).unwrap();
        assert!(dir.path().join("step_001.png").exists());
        let back = read_trajectory(dir.path()).unwrap();
        assert_eq!(back.steps.len(), 2);
        assert_eq!(back.steps[0].observation.ax_text, traj.steps[0].observation.ax_text);
        assert_eq!(back.steps[0].observation.screenshot, traj.steps[0].observation.screenshot);
        assert_eq!(back.answer, traj.answer);
    }
}
