"""The five LLM prompt templates and their renderers.

Templates carry ``{{name}}`` placeholders; rendering is plain substitution so
the surrounding text stays byte-stable for golden tests and transcript
hashing.
"""

from __future__ import annotations

import json

DECOMPOSE = "decompose"
TEXT2SQL = "text2sql"
EXTRACT = "extract"
EVALUATE = "evaluate"
PLAN = "plan"

PROMPT_DECOMPOSE = """You are an intelligent assistant tasked with generating sub-queries to retrieve data that {{stance}} the statement: "{{query}}". Generate three detailed and relevant sub-queries to help retrieve data facts, evidence, and perspectives. The generated sub-queries should focus on specific metrics or indicators that reflect the stance clearly.

For opposing the statement (e.g., "Global environmental conditions are deteriorating"):

- Generate sub-queries that ask about positive trends, improvements, or mitigating factors.

- Example: "Are global CO2 emissions decreasing year by year?"

For supporting the statement (e.g., "Global environmental conditions are deteriorating"):

- Generate sub-queries that seek evidence of negative trends, worsening conditions, or evidence of decline.

- Example: "Is the frequency of extreme weather events increasing worldwide?"

Please provide the output in the following format:

{
    "queryList": [
        "Sub-query 1",
        "Sub-query 2",
        "Sub-query 3"
    ],
    "directionList": [
        "Overview of Sub-query 1 (1 to 3 words)",
        "Overview of Sub-query 2 (1 to 3 words)",
        "Overview of Sub-query 3 (1 to 3 words)"
    ]
}
"""

PROMPT_TEXT2SQL = """The following are the relevant table and its columns for the request:

Table name: {{table_name}}

Columns: {{columns}}

Columns and their rows: {{values}}

Generate a SQL query to retrieve the information for the following request:

{{query}}

The SQL query should:

- Be careful to not query for columns that do not exist.

- At least filter out the following series: {{relevant_series}}.

- Filter based on the request, especially the mentioned entities.

- Select only existing columns without performing any calculations.

- Limit the result set to 10 rows and 50 columns.

- Output only the SQL query without any additional explanations or text.
"""

PROMPT_EXTRACT = """You are tasked with extracting data facts from the provided data table that best {{stance}} the statement.

A data fact consists of the following attributes:

    - Type: Describes the information type of the fact.

    - Subspace: Defines the data scope with a set of filters.

    - Breakdown: Temporal or categorical fields for grouping data.

    - Measure: Numerical data fields based on which we can retrieve a data value or calculate a derived value, such as sum, average, minimum, or maximum, by aggregating the subspace or each data group.

    - Focus: Specific data items in the subspace requiring attention.

You will proceed step by step, making decisions about each attribute in sequence.

Data table: {{data}}

Statement: {{statement}}

Query: {{query}}

Step 1: Choose the Type

    - Review the data in the tables.

    - Identify the most relevant type of data fact that could be used to {{stance}} the statement. The possible types include:

        Value: A specific value or measurement.

        Difference: A comparison between two values.

        Proportion: The share of a part measured against the whole.

        Trend: The change of a measure over sequential time groups.

        Categorization: The distinct groups that make up the data.

        Distribution: How the values of a measure spread across groups.

        Rank: The ordering of groups by a measure.

        Association: The relationship between two measures.

        Extreme: The maximum or minimum value across groups.

        Outlier: A value that deviates markedly from the other groups.

    - Provide a brief explanation for your choice of type.

Step 2: Select the Measure

- Based on the chosen type, identify the most relevant numerical data fields and aggregation type.

- Ensure that the measure is directly related to the statement and query.

- Format: [
    {
        "aggregate": "none",  // Options: "none", "max", "min", "sum", "avg"
        "field": "column name"
    },
    ......
]

- For Association, provide two measures. For other types, only provide one measure.

- Provide a brief explanation for your choice of measure.

Step 3: Determine the Breakdown

- Consider how the data should be grouped by a temporal or categorical field.

- Choose a breakdown that would make the data fact more compelling in the context of the statement.

- Format: ["column name"]

- For all types, provide one breakdown.

- Provide a brief explanation for your choice of breakdown.

Step 4: Define the Subspace

- Specify the subspace or subset of the data that is most relevant to the statement and query.

- Format: [
    {
        "field": "column name",
        "value": "xx"
    },
    ......
]

- For Trend, only provide one subspace. For other types, provide one or more subspaces, or leave this list empty.

- For Value, the subspaces should filter out a specific value.

- Provide a brief explanation for your choice of subspace.

Step 5: Focus on the Key Aspect

- Identify the key focus of the data fact.

- The focus value should be a specific value in the selected field.

- Format: [
    {
        "field": "column name",
        "value": "xx"
    },
    ......
]

- For Difference, provide two focus. For Proportion, provide one focus. For other types, provide one focus or return an empty list.

- Explain why this focus is critical to {{stance}} the statement.

Step 6: Generate a Description

- Generate a concise description (30 words or fewer) that summarizes the data fact and its impact or significance.

- The description should not only describe the fact but also indicate the derived result of the data fact.

- Format: "description"

Final Step: Extract the Data Fact

- After considering all the above attributes, extract the data fact from the tables.

- You should output in this format:

    Generated Data Fact: {
        "type": "type",
        "measure": [...],
        "breakdown": [...],
        "subspace": [...],
        "focus": [...],
        "description": "text"
    }

Repeat the process to extract three data facts.
"""

PROMPT_EVALUATE = """You are an intelligent assistant tasked with evaluating extracted data facts to determine whether they support or oppose the statement. Think step-by-step and explain the stance (support or oppose) of the data fact towards the statement.

For each data fact provided, please generate probabilities of the data fact supporting and opposing the statement.

## Input:

    "Data facts": {{facts}},

    "Statement": {{statement}}

## Output Format:

[
    {
        "index": 0,
        "support": [probability],
        "oppose": [probability],
        "explanation": [text]
    },
    ......
]

## Example Output:

[
    {
        "index": 0,
        "support": 0.76,
        "oppose": 0.24,
        "explanation": ...
    },
    ......
]
"""

PROMPT_PLAN = """You are tasked with recommending the next sub-query for data exploration.

## Goal:

- Given multiple sub-queries and their relevant data facts, recommend the sub-query that should be further explored to retrieve additional relevant data facts that {{stance}} the given statement: {{statement}}.

- You should consider the following:

1. Depth of Exploration: Choose the sub-query that could reveal more detailed data facts to {{stance}} the statement.

2. Stance Alignment: Focus on the sub-query likely to yield data facts that align with the stance.

3. Relevance: Prioritize the sub-query where data facts are most relevant to the statement.

4. Diversity: Consider the sub-query that might offer new or different perspectives on the data.

5. Balance between Known and Unknown: Balance continuing with a sub-query that has already provided useful facts between exploring a potentially unexplored sub-query.

## Observations:

For each sub-query, you have the following details:

1. The index of the sub-query.

2. The sub-query itself.

3. Associated data facts, where each data fact includes:

   - The fact itself.

   - The stance of the fact towards the statement (whether it supports or opposes the statement).

   - The relevance of the fact to the statement.

Here are the sub-queries and their associated data facts:

{{queries_facts}}

## Actions:

Based on the observations, recommend one sub-query for further data exploration.

## Output format:

{
    "Reasoning": "...",
    "Recommend Index": number
}
"""


def _fill(template: str, mapping: dict[str, object]) -> str:
    rendered = template
    for key, value in mapping.items():
        text = value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)
        rendered = rendered.replace("{{" + key + "}}", text)
    return rendered


def render_decompose(query: str, stance: str) -> str:
    return _fill(PROMPT_DECOMPOSE, {"stance": stance, "query": query})


def render_text2sql(
    table_name: str,
    columns: list[str],
    values: dict[str, list],
    query: str,
    relevant_series: list[str],
) -> str:
    return _fill(
        PROMPT_TEXT2SQL,
        {
            "table_name": table_name,
            "columns": columns,
            "values": values,
            "query": query,
            "relevant_series": ", ".join(relevant_series) if relevant_series else "none",
        },
    )


def render_extract(data: dict, statement: str, query: str, stance: str) -> str:
    return _fill(
        PROMPT_EXTRACT,
        {"data": data, "statement": statement, "query": query, "stance": stance},
    )


def render_evaluate(facts: list[dict], statement: str) -> str:
    return _fill(PROMPT_EVALUATE, {"facts": facts, "statement": statement})


def render_plan(queries_facts: list[dict], statement: str, stance: str) -> str:
    return _fill(
        PROMPT_PLAN,
        {"queries_facts": queries_facts, "statement": statement, "stance": stance},
    )
