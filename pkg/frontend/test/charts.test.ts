import { describe, expect, it } from "vitest";

import type { ChartSpecDto, ResultDto } from "../src/api.js";
import { renderChart } from "../src/charts.js";
import { sampleChart, sampleResult } from "./fixtures.js";

function spec(mark: ChartSpecDto["mark"], overrides: Partial<ChartSpecDto> = {}): ChartSpecDto {
  return { ...sampleChart(), mark, ...overrides };
}

describe("chart rendering", () => {
  it("always draws axis titles and the data source", () => {
    for (const mark of ["bar", "line", "pie", "scatter", "big_number", "grouped_bar"] as const) {
      const svg = renderChart(spec(mark), sampleResult());
      expect(svg).toContain("x-axis-title");
      expect(svg).toContain("y-axis-title");
      expect(svg).toContain("Source: bundled sample");
      expect(svg).toContain(`data-mark="${mark}"`);
    }
  });

  it("highlights focus keys in bars", () => {
    const svg = renderChart(spec("bar"), sampleResult());
    const highlighted = svg.match(/data-key="South Africa"[^/]*fill="#e4572e"/);
    expect(highlighted).not.toBeNull();
    expect(svg).toContain('data-key="Brazil"');
  });

  it("renders a big number from the derived scalar", () => {
    const result: ResultDto = {
      ...sampleResult(),
      derived: { scalar: 6037000 },
    };
    const svg = renderChart(spec("big_number"), result);
    expect(svg).toContain("6,037,000");
  });

  it("scatter uses paired group values", () => {
    const result: ResultDto = {
      ...sampleResult(),
      groups: [
        { key: "2014", value: 63.4, value2: 77.8 },
        { key: "2023", value: 59.3, value2: 74.0 },
      ],
      derived: { pearson_r: 0.99 },
    };
    const svg = renderChart(spec("scatter"), result);
    expect((svg.match(/<circle/g) ?? []).length).toBe(2);
  });

  it("escapes markup in captions and titles", () => {
    const svg = renderChart(
      spec("bar", { x: { field: "c", title: "a<b>" }, source: 'quo"te' }),
      sampleResult(),
    );
    expect(svg).toContain("a&lt;b&gt;");
    expect(svg).toContain("quo&quot;te");
  });
});
