//! Prompt construction for remote agents.
//!
//! Every round the acting trader receives a freshly generated prompt with
//! seven parts, in order: market details, public and private information,
//! an explanation of prediction markets, the trading objective, market data
//! (history, comments, portfolio, affordability, price impact), an optional
//! findings block, and the decision request. Section headers are stable
//! byte-for-byte; golden-file tests pin the full rendering.

use super::{AgentContext, Action, Disclosure, Objective};
use crate::knowledge::{InfoStructure, StructureId, TraderId};
use crate::lmsr::Side;
use std::fmt::Write;

pub const MYOPIC_OBJECTIVE: &str = "Use reasoning to determine your belief q, then choose your action (Buy, Sell, or Hold: Yes and No shares). Maximize your expected payoff in this round only, based on your belief q and the current price p, ignoring future rounds.";

pub const STRATEGIC_OBJECTIVE: &str = "Use reasoning to determine your belief q, then choose your action (Buy, Sell, or Hold: Yes and No shares). Maximize the sum of your expected payoffs over all trading rounds, based on your belief q and the current price p. Consider how your current trade affects the price and the beliefs of others in future\nrounds.";

pub fn objective_text(objective: Objective) -> &'static str {
    match objective {
        Objective::Myopic => MYOPIC_OBJECTIVE,
        Objective::Strategic => STRATEGIC_OBJECTIVE,
    }
}

/// The default market question used by all benchmark structures.
pub const MARKET_QUESTION: &str =
    "Will Company X post next quarter profits that exceed 1 million?";

const INFO_PREAMBLE: &str = "The prediction market question has two answers: Yes and No. There are three relevant dimensions to this prediction market question: dimension d_a: Will sales in country A exceed 1 million? dimension d_b: Will sales in country B exceed 1 million? dimension d_c: Will sales in country C exceed 1 million? The answer to each dimension is either true, with probability 0.5, or false, with probability 0.5. Dimensions are independent, hence the probability of a dimension d resolving to true is independent of whether the other dimensions resolve to true or false. In summary, there are eight states of the world, depending on whether d_a, d_b, or d_c are true or false. The answer to the prediction market question of whether the profits of Company X will exceed 1 million is Yes if ";

const INFO_SUFFIX: &str = " All three traders assign the same prior probabilities to each dimension resolving to true or false.";

/// The public description of who knows what and when Yes pays, shared with
/// every trader.
pub fn public_information_text(structure: &InfoStructure) -> String {
    match structure.preset {
        Some(StructureId::Easy) => format!(
            "{INFO_PREAMBLE}at least two dimensions (d_a,d_b,d_c) resolve to true. If more than one dimension resolves to false, then the answer to the question is No. There are three traders in the market. Trader_1 is privately informed whether d_a is true or not, Trader_2 is privately informed whether d_b is true or not, and Trader_3 is privately informed whether d_c is true or not.{INFO_SUFFIX}"
        ),
        Some(StructureId::Medium) | Some(StructureId::Hard) => format!(
            "{INFO_PREAMBLE}all three dimensions (d_a,d_b,d_c) resolve to true. If at least one dimension resolves to false, then the answer to the question is No. There are three traders in the market. Trader_1 is privately informed whether d_a is true or not, Trader_2 is privately informed whether d_b is true or not, and Trader_3 is privately informed whether d_c is true or not.{INFO_SUFFIX}"
        ),
        Some(StructureId::VeryHard) => format!(
            "{INFO_PREAMBLE}exactly two of the three dimensions (d_a,d_b,d_c) resolve to true. If all three dimensions resolve to true, or at least two dimensions resolve to false, then the answer to the question is No. There are three traders in the market. Trader_1 is privately informed whether d_b and d_c are true or not, Trader_2 is privately informed whether d_a and d_c are true or not, and Trader_3 is privately informed whether d_a and d_b are true or not.{INFO_SUFFIX}"
        ),
        None => generic_public_information(structure),
    }
}

fn generic_public_information(structure: &InfoStructure) -> String {
    let space = &structure.space;
    let yes_states: Vec<String> = (0..space.n_states())
        .filter(|&s| structure.security.payoff(s) > 0.0)
        .map(|s| {
            let realisation: Vec<String> = space
                .signal_names()
                .iter()
                .enumerate()
                .map(|(j, name)| format!("{name}={}", u8::from(space.signal(s, j))))
                .collect();
            format!("({})", realisation.join(","))
        })
        .collect();
    format!(
        "The prediction market question has two answers: Yes and No. There are {} relevant dimensions to this prediction market question: {}. Each dimension is either true or false and the answer to the question is Yes exactly at these joint realisations: {}. There are {} traders in the market, each privately informed about part of the realisation.",
        space.n_signals(),
        space.signal_names().join(", "),
        yes_states.join(", "),
        structure.n_traders(),
    )
}

/// The trader's private signal report.
pub fn private_information_text(structure: &InfoStructure, trader: TraderId) -> String {
    let space = &structure.space;
    let observed: Vec<usize> = match structure.preset {
        Some(StructureId::Easy) | Some(StructureId::Medium) | Some(StructureId::Hard) => {
            vec![trader]
        }
        Some(StructureId::VeryHard) => (0..3).filter(|&j| j != trader).collect(),
        None => {
            let cell = structure.partition(trader).cell_of(structure.true_state);
            let names: Vec<String> = cell.iter().map(|s| space.state_name(s)).collect();
            return format!(
                "A true state has now occurred. You (trader_{}) are now informed truthfully and privately that the true state is one of {{{}}}.",
                trader + 1,
                names.join(", ")
            );
        }
    };
    let clause = match observed.as_slice() {
        [j] => {
            let value = space.signal(structure.true_state, *j);
            format!(
                "{} is {}",
                space.signal_names()[*j],
                if value { "true" } else { "false" }
            )
        }
        [j, k] => {
            let (nj, nk) = (&space.signal_names()[*j], &space.signal_names()[*k]);
            let (vj, vk) = (
                space.signal(structure.true_state, *j),
                space.signal(structure.true_state, *k),
            );
            match (vj, vk) {
                (true, true) => format!("{nj} and {nk} are true"),
                (false, false) => format!("{nj} and {nk} are false"),
                (true, false) => format!("{nj} is true and {nk} is false"),
                (false, true) => format!("{nj} is false and {nk} is true"),
            }
        }
        _ => unreachable!("benchmark traders observe one or two signals"),
    };
    format!(
        "A true state has now occurred. You (trader_{}) are now informed truthfully and privately that {clause}.",
        trader + 1
    )
}

fn money(x: f64) -> String {
    format!("\u{a3}{x:.2}")
}

fn price3(x: f64) -> String {
    format!("\u{a3}{x:.3}")
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn fmt_intelligence(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{:.0}", x)
    } else {
        format!("{x}")
    }
}

/// The findings block added in the disclosure treatment.
pub fn disclosure_block(d: &Disclosure, trader_name: &str) -> String {
    let mut iq_lines = format!(
        "* Your Intelligence ({trader_name}): {}\n",
        fmt_intelligence(d.own_intelligence)
    );
    let mut sum = d.own_intelligence;
    for (name, iq) in &d.others {
        let _ = writeln!(iq_lines, "* Intelligence of {name}: {}", fmt_intelligence(*iq));
        sum += iq;
    }
    let avg = sum / (1 + d.others.len()) as f64;
    format!(
        "=== Experimental Findings & Strategic Context ===\n\
         Before trading, all traders are informed about the following qualitative \n\
         results from a study of over 1,700 similar prediction markets involving LLM \n\
         agents. Use them to guide your decisions.\n\
         Definition of market accuracy: denotes how close is the last price of the \n\
         Yes shares to the true value of the Yes shares, and similarly for the No\n\
         shares.\n\
         Definition of Intelligence: Agents are scored on the \"Artificial Analysis \n\
         Intelligence Index\" (reasoning, math, coding). The observed range in our \n\
         study is 7 (Low) to 46 (High).\n\
         \n\
         1. Intelligence\n\
         {iq_lines}\
         * Average Group Intelligence: {avg:.2}\n\
         Result 1 shows that higher individual intelligence directly correlates \n\
         with higher profits.\n\
         \n\
         2. Market Complexity\n\
         * We ranked the market structures by complexity of reasoning: Level 1 \n\
         (Easiest) < Level 2 < Level 3 < Level 4 (Hardest).\n\
         * Current Status: You are trading in a Level {level} market.\n\
         Result 2 shows that as complexity rises, trader profits decrease and \n\
         the market becomes less accurate.\n\
         \n\
         3. Market Design\n\
         * Result 3: Trading order significantly impacts profitability. The most \n\
         profitable position is 3rd, followed by 1st, with 2nd being the least \n\
         profitable (3rd > 1st > 2nd).\n\
         * Result 4: Higher average group intelligence leads to a more accurate \n\
         market but lower individual profits.\n\
         * Neutral Factors: The following factors have no statistically significant \n\
         effect on market accuracy:\n\
         * Result 5: Posting public comments has no effect on market accuracy.\n\
         * Result 6: Being \"myopic\" (maximize profits on current round only) vs. \n\
         \"strategic\" (maximize profits for current and all future rounds) has no \n\
         effect on market accuracy.\n\
         * Result 7: The initial price of the market has no effect on market \n\
         accuracy.\n\
         * Result 8: Increasing the duration of the market (9 rounds vs 3) has no \n\
         effect on market accuracy.\n",
        level = d.complexity_level
    )
}

/// Renders the full prompt for the acting trader.
pub fn build_prompt(ctx: &AgentContext) -> String {
    let mut p = String::with_capacity(8 * 1024);
    let name = ctx.trader_name();
    let others: Vec<&str> = ctx
        .trader_names
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ctx.trader)
        .map(|(_, n)| n.as_str())
        .collect();

    // Part 1: market details
    let _ = write!(
        p,
        "You are {name}, a participant in the following prediction market.\n\
         \n\
         === PREDICTION MARKET ===\n\
         Question: {question}\n\
         Description: {description}\n\
         Comments allowed: {comments}\n\
         Current Round: {round}\n\
         Total Rounds in the Market: {total}\n\
         Participants: {participants}\n\
         \n\
         Participants trade sequentially and in the order specified above. After the last participant trades, \n\
         the first participant trades again, and so on, until we reach the last round and the market ends. \n\
         The other participants in this prediction market are: {others}.\n",
        question = ctx.question,
        description = ctx.description,
        comments = if ctx.comments_allowed { "Yes" } else { "No" },
        round = ctx.current_round,
        total = ctx.total_rounds,
        participants = ctx.trader_names.join(", "),
        others = others.join(", "),
    );

    // Part 2: public and private information
    let _ = write!(
        p,
        "\n\nPublic Information: {}\n\n\nYour Private Information (only shared with you): {}\n",
        ctx.public_info, ctx.private_info
    );
    if !ctx.own_reasonings.is_empty() {
        p.push_str("\n\nYour previous private reasoning (only visible to you):\n");
        for r in &ctx.own_reasonings {
            let _ = writeln!(p, "  [Round {}] {}", r.round, r.text);
        }
    }

    // Part 3: what a prediction market is
    let _ = write!(
        p,
        "\n\n=== What is a prediction market? ===\n\
         A prediction market is a platform where participants can buy and sell shares in the outcome of a specific event, with a binary question that has two possible outcomes: Yes or No.\n\
         The current price of a \u{201c}Yes\u{201d} share, denoted p, represents the market\u{2019}s current belief that the event will resolve to \u{201c}Yes.\u{201d}\n\
         For example, if p = 0.65, the market assigns a 65% probability to the event resolving to \u{201c}Yes.\u{201d}\n\
         \n\
         Rules and reasoning process\n\
         Interpret the question.\n\
         Understand what \u{201c}Yes\u{201d} and \u{201c}No\u{201d} mean in this market.\n\
         Form your own belief.\n\
         Based on the question, historical prices, trader comments, and any reasoning you can infer, assign your own subjective probability q that the outcome will be \u{201c}Yes.\u{201d}\n\
         \n\
         This market operates on a Logarithmic Market Scoring Rule (LMSR) with a specific liquidity parameter (beta = {beta}). \n\
         \n\
         The current price of \"YES\" is determined by comparing the total shares sold for \"YES\" against the total shares sold for \"NO.\" Specifically, the price is the exponential of the \"YES\" shares divided by the sum of the exponentials of both \"YES\" and \"NO\" shares. Consequently, as the number of shares held in a specific outcome increases relative to the other, the price of that outcome rises.\n\
         \n\
         Initial Prices: The market does not always start at a 0.5/0.5 prices for Yes and No. It may be initialized with \"offset\" shares to reflect a specific starting likelihood (e.g., 0.8/0.2) by the market maker, so it is as if the market maker has bought some Yes or No shares initially. \n\
         \n\
         Cost & Slippage: The cost to purchase shares is not linear (Price \u{d7} Quantity). Instead, it is calculated by measuring the difference in the market's total cost function before and after the trade. As you buy more shares of an outcome, the price for each subsequent share incrementally increases. This phenomenon is known as \"price impact\" or \"slippage.\"\n\
         \n\
         You can only sell shares you own, and you can only buy shares if you have enough cash.\n\
         Payoffs:\n\
         If the final outcome is Yes, each \u{201c}Yes\u{201d} share pays 1, each \u{201c}No\u{201d} share pays 0.\n\
         If the final outcome is No, each \u{201c}No\u{201d} share pays 1, each \u{201c}Yes\u{201d} share pays 0.\n\
         Market dynamics:\n\
         When the price of \u{201c}Yes\u{201d} rises, traders are collectively assigning higher probability to \u{201c}Yes.\u{201d}\n\
         But beware: some traders may act strategically and try to manipulate prices.\n\
         Use price history and comments to infer whether movements reflect genuine information or strategic behavior.\n",
        beta = ctx.beta,
    );

    // Part 4: objective
    let _ = write!(
        p,
        "\n=== YOUR OBJECTIVE ===\n{}\nYou will also be asked to provide your reasoning for your decision, which will be shared privately with you in future rounds where you trade. If public comments are allowed in the market, you can also post a public justification for your action that other participants can see.\n",
        objective_text(ctx.objective)
    );

    // Part 5: market data, portfolio, affordability, price impact
    let _ = write!(
        p,
        "\n=== PUBLIC INFORMATION ===\n\
         This section contains all publicly available market data, generated by the participants: {}.\n\
         \n\
         Current Prices\n\
         \u{20}\u{20}Yes: {} per share\n\
         \u{20}\u{20}No: {} per share\n\
         \n\
         Trade History (oldest first):\n",
        ctx.trader_names.join(", "),
        money(round2(ctx.price_yes)),
        money(round2(1.0 - ctx.price_yes)),
    );
    let mut any_trade = false;
    for h in &ctx.history {
        if h.action == Action::Hold || h.executed == 0 {
            continue;
        }
        any_trade = true;
        let verb = if h.action == Action::Buy { "bought" } else { "sold" };
        if round2(h.price_before) == round2(h.price_after) {
            let _ = writeln!(
                p,
                "{} {verb} {} {} shares, at {} on {}",
                h.trader_name,
                h.executed,
                h.side.label(),
                money(round2(h.price_after)),
                h.timestamp,
            );
        } else {
            let _ = writeln!(
                p,
                "{} {verb} {} {} shares, price went from {} to {} on {}",
                h.trader_name,
                h.executed,
                h.side.label(),
                money(round2(h.price_before)),
                money(round2(h.price_after)),
                h.timestamp,
            );
        }
    }
    if !any_trade {
        p.push_str("No trades yet.\n");
    }
    let _ = write!(
        p,
        "\nMarket Comments ({} total, most recent first):\n",
        ctx.comments.len()
    );
    for c in ctx.comments.iter().rev() {
        let _ = writeln!(p, "  [{}] {}: {}", c.timestamp, c.trader_name, c.text);
    }

    let price_yes_2 = round2(ctx.price_yes);
    let price_no_2 = round2(1.0 - ctx.price_yes);
    let yes_value = ctx.yes_held as f64 * price_yes_2;
    let no_value = ctx.no_held as f64 * price_no_2;
    let _ = write!(
        p,
        "\n\n=== YOUR CURRENT PORTFOLIO ===\n\
         Portfolio for {name}:\n\
         \u{20}\u{20}Cash: {cash}\n\
         \u{20}\u{20}Yes: {yh} shares (value at current prices: {yv}, payoff: {yp} if Yes wins, {z} if No wins)\n\
         \u{20}\u{20}No: {nh} shares (value at current prices: {nv}, payoff: {z} if Yes wins, {np} if No wins)\n\
         \u{20}\u{20}Total Portfolio Value: {total}\n\
         \n\
         Given the current prices and your cash balance, you can afford to buy up to:\n\
         \n\
         YES shares: {mby} (total cost: {mbyc})\n\
         NO shares: {mbn} (total cost: {mbnc})\n\
         \n\
         Notes: These calculations account for price increases as you buy more shares.\n\
         \n\
         Maximum sellable shares (based on shares you currently own):\n\
         \n\
         Yes: {yh} shares\n\
         No: {nh} shares\n",
        cash = money(ctx.cash),
        yh = ctx.yes_held,
        yv = money(yes_value),
        yp = money(ctx.yes_held as f64),
        nh = ctx.no_held,
        nv = money(no_value),
        np = money(ctx.no_held as f64),
        z = money(0.0),
        total = money(ctx.cash + yes_value + no_value),
        mby = ctx.max_buy_yes,
        mbyc = money(ctx.max_buy_yes_cost),
        mbn = ctx.max_buy_no,
        mbnc = money(ctx.max_buy_no_cost),
    );

    p.push_str(
        "\n=== PRICE IMPACT OF TRADES ===\nThis shows how prices would change if you buy or sell shares:\n",
    );
    for side in [Side::Yes, Side::No] {
        let _ = write!(p, "\n{} shares:\n", side.label());
        for r in ctx.impact.iter().filter(|r| r.side == side) {
            let pct = if r.price_before.abs() > 0.0 {
                (r.price_after - r.price_before) / r.price_before * 100.0
            } else {
                0.0
            };
            // percentages display truncated toward zero, one decimal
            let sign = if pct >= 0.0 { '+' } else { '-' };
            let magnitude = (pct.abs() * 10.0).floor() / 10.0;
            let _ = writeln!(
                p,
                "  {} {}: {} \u{2192} {} ({sign}{magnitude:.1}%)",
                if r.buy { "Buy" } else { "Sell" },
                r.label,
                price3(r.price_before),
                price3(r.price_after),
            );
        }
    }
    p.push_str(
        "\nNotes: These are simulations only. Actual prices may vary slightly due to concurrent trades.\n",
    );

    p.push_str(
        "\n=== TRADING RULES ===\n\
         \u{20}\u{20}\u{2022} You can BUY, SELL, or HOLD\n\
         \u{20}\u{20}\u{2022} The price may change after each share (market impact)\n\
         \u{20}\u{20}\u{2022} You can only buy if you have sufficient cash\n\
         \u{20}\u{20}\u{2022} You can only sell shares you own\n",
    );

    // Part 6: disclosure treatment findings
    if let Some(d) = &ctx.disclosure {
        p.push('\n');
        p.push_str(&disclosure_block(d, name));
    }

    // Part 7: decision request
    let _ = write!(
        p,
        "\n=== YOUR DECISION ===\n\
         Analyze the market and your portfolio, then respond with a JSON object:\n\
         {{\n\
         \u{20}\u{20}\"action\": \"BUY or SELL or HOLD\",\n\
         \u{20}\u{20}\"instrument_id\": \"the ID number of the instrument ({yes_id} for Yes, {no_id} for No)\",\n\
         \u{20}\u{20}\"size\": \"number of shares\",\n",
        yes_id = ctx.instrument_yes,
        no_id = ctx.instrument_no,
    );
    if ctx.comments_allowed {
        p.push_str("  \"public_justification\": \"brief explanation of your reasoning that you want everyone to know (this will be posted as a market comment visible to everyone)\",\n");
    }
    p.push_str(
        "  \"private_reasoning\": \"brief explanation of your reasoning that only you will see (this will NOT be posted as a comment; it will only be visible to you in your next turn)\"\n\
         }\n\
         \n\
         Important: Only output valid JSON. No other text.",
    );
    p
}
