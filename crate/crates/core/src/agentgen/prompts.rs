//! Versioned prompt-text assets for the generation agents.
//!
//! These are emitted into requests byte-exactly; the golden tests pin the
//! rendered bytes, so any edit here is a deliberate prompt-version change.

/// Few-shot prompt for the question-expansion agent. The two placeholders
/// are filled by [`render_expansion_prompt`].
pub const EXPANSION_PROMPT_TEMPLATE: &str = "Your goal is to create multiple word problems from a given word problem and its answer. First convert the question of the word problem into a statement. Then for each number in the converted problem create a new word problem. Here are some examples:

Example 1:
Q: Natalia sold clips to 48 of her friends in April, and then she sold half as many clips in May. How many clips did Natalia sell altogether in April and May?

Answer: 72

Replacing question with statement: Natalia sold clips to 48 of her friends in April, and then she sold half as many clips in May. Natalia sold altogether 72 clips in April and May.

All questions:

<target> 48

<question>
Natalia sold clips to some of her friends in April, and then she sold half as many clips in May. Natalia sold altogether 72 clips in April and May. How many clips did she sell in April?

<target> half

<question>
Natalia sold clips to 48 of her friends in April, and then she sold some clips in May. Natalia sold altogether 72 clips in April and May. What is the ratio of the number clips sold in April to number clips sold in May?

<target> 72

<question>
Natalia sold clips to 48 of her friends in April, and then she sold half as many clips in May. How many clips did Natalia sell altogether in April and May?

Example 2:
Q: Weng earns $12 an hour for babysitting. Yesterday, she just did 50 minutes of babysitting. How much did she earn?

Answer: 10

Replacing question with statement: Weng earns $12 an hour for babysitting. Yesterday, she just did 50 minutes of babysitting. She earned $10.

All questions:

<target> 12

<question>
Weng earns a certain amount per hour for babysitting. Yesterday, she just did 50 minutes of babysitting and earned 10. How much does she earn per hour?

<target> 50

<question>
Weng earns 12 an hour for babysitting. Yesterday, she just did some babysitting and earned 10. How much time did she spend on babysitting?

<target> 10

<question>
Weng earns 12 an hour for babysitting. Yesterday, she just did 50 minutes of babysitting. How much did she earn?

Example 3:
Q: Betty is saving money for a new wallet which costs 100. Betty has only half of the money she needs. Her parents decided to give her 15 for that purpose, and her grandparents twice as much as her parents. How much more money does Betty need to buy the wallet?

Answer: 5

Replacing question with statement: Betty is saving money for a new wallet which costs 100. Betty has only half of the money she needs. Her parents decided to give her 15 for that purpose, and her grandparents gave her twice as much as her parents. She needs 5 more to buy the wallet.

All questions:

<target> 100

<question>
Betty is saving money for a new wallet. Betty has only half of the money she needs. Her parents decided to give her 15 for that purpose, and her grandparents twice as much as her parents. She needs 5 more to buy the wallet. What is the cost of the wallet?

<target> half

<question>
Betty is saving money for a new wallet which costs 100. She has some money saved, her parents decided to give her 15, and her grandparents gave her twice as much as her parents. Now, Betty needs 5 more to buy the wallet. What is the ratio of the money Betty have saved initially to the cost of wallet?

<target> 15

<question>
Betty is saving money for a new wallet which costs 100. She has half of the money she needs, her parents decided to give her some money, and her grandparents gave her twice as much as her parents. Now, Betty needs 5 more to buy the wallet. How much money did her parents give her?

<target> twice

<question>
Betty is saving money for a new wallet which costs 100. Betty has only half of the money she needs. Her parents decided to give her 15 for that purpose, and her grandparents also chipped in. Now, Betty needs 5 more to buy the wallet. What is the ratio of the amount given by her grandparents to the amount given by her parents?

<target> 5

<question>
Betty is saving money for a new wallet which costs 100. Betty has only half of the money she needs. Her parents decided to give her 15 for that purpose, and her grandparents twice as much as her parents. How much more money does Betty need to buy the wallet?

Now solve this:

Example 4:
Q: {question}
Answer: {answer}";

/// Fills the Example-4 slot with the seed problem.
pub fn render_expansion_prompt(question: &str, answer: &str) -> String {
    EXPANSION_PROMPT_TEMPLATE
        .replace("{question}", question)
        .replace("{answer}", answer)
}

/// Role prompt for the difficulty-suggestion agent.
pub const SUGGESTER_SYSTEM_PROMPT: &str = "You examine a given math word problem and propose several methods for enhancing its complexity, without creating the actual problem. Reply with your suggestions only.";

/// Role prompt for the rewriting agent.
pub const EDITOR_SYSTEM_PROMPT: &str = "You take an original math word problem and a list of suggestions, and generate an updated, more challenging problem that follows the suggestions. Reply with the new word problem only.";

/// User message layout for the rewriting agent.
pub fn editor_user_message(problem: &str, suggestions: &str) -> String {
    format!("Problem:\n{problem}\n\nSuggestions:\n{suggestions}")
}

/// Default prompt set wired into the generation agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentPromptSet {
    pub expansion_template: String,
    pub suggester_system_prompt: String,
    pub editor_system_prompt: String,
}

impl Default for AgentPromptSet {
    fn default() -> Self {
        AgentPromptSet {
            expansion_template: EXPANSION_PROMPT_TEMPLATE.to_string(),
            suggester_system_prompt: SUGGESTER_SYSTEM_PROMPT.to_string(),
            editor_system_prompt: EDITOR_SYSTEM_PROMPT.to_string(),
        }
    }
}

impl AgentPromptSet {
    pub fn render_expansion(&self, question: &str, answer: &str) -> String {
        self.expansion_template
            .replace("{question}", question)
            .replace("{answer}", answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_has_both_slots_and_three_examples() {
        assert!(EXPANSION_PROMPT_TEMPLATE.contains("{question}"));
        assert!(EXPANSION_PROMPT_TEMPLATE.contains("{answer}"));
        assert_eq!(EXPANSION_PROMPT_TEMPLATE.matches("<target>").count(), 11);
        assert_eq!(EXPANSION_PROMPT_TEMPLATE.matches("<question>").count(), 11);
        assert_eq!(EXPANSION_PROMPT_TEMPLATE.matches("All questions:").count(), 3);
    }

    #[test]
    fn rendering_substitutes_only_the_slot() {
        let rendered = render_expansion_prompt("How many marbles?", "12");
        assert!(rendered.ends_with("Q: How many marbles?\nAnswer: 12"));
        assert!(!rendered.contains("{question}"));
        let prefix_len = EXPANSION_PROMPT_TEMPLATE.find("{question}").unwrap();
        assert_eq!(&rendered[..prefix_len], &EXPANSION_PROMPT_TEMPLATE[..prefix_len]);
    }
}
