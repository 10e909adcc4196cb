/** Snapshot tests: views rendered from recorded service responses. */

import { describe, expect, it } from "vitest";

import askAbstained from "../fixtures/ask_abstained.json";
import askConfident from "../fixtures/ask_confident.json";
import askDisclaimer from "../fixtures/ask_disclaimer.json";
import askIrrelevant from "../fixtures/ask_irrelevant.json";
import missingList from "../fixtures/missing_list.json";
import uploadResult from "../fixtures/upload_result.json";

import {
  answerView,
  citationChips,
  claimEvidenceDrilldown,
  confidenceBadge,
  confidenceLabel,
  disclaimerBanner,
  missingListTable,
  progressIndicator,
  retryAffordance,
  uploadNotice,
} from "../src/render.js";
import type { AskResponse, MissingListResponse, UploadResponse } from "../src/types.js";

const confident = askConfident as unknown as AskResponse;
const disclaimer = askDisclaimer as unknown as AskResponse;
const abstained = askAbstained as unknown as AskResponse;
const irrelevant = askIrrelevant as unknown as AskResponse;
const missing = missingList as unknown as MissingListResponse;
const upload = uploadResult as unknown as UploadResponse;

describe("confidence badge", () => {
  it("maps the published score bands to labels", () => {
    expect(confidenceLabel(1.0)).toBe("High");
    expect(confidenceLabel(0.75)).toBe("High");
    expect(confidenceLabel(0.5)).toBe("Medium");
    expect(confidenceLabel(0.25)).toBe("Low");
    expect(confidenceLabel(0.0)).toBe("Low");
  });

  it("renders the recorded confidence verbatim", () => {
    const html = confidenceBadge(confident.confidence);
    expect(html).toContain("High (1.00)");
    expect(html).toContain("badge-green");
    expect(html).toMatchSnapshot();
  });
});

describe("answer view from recorded responses", () => {
  it("confident answer: green badge, chips, drill-down", () => {
    const html = answerView(confident);
    expect(html).toContain("badge-green");
    expect(html).toContain("chip");
    // every chip is traceable to a recorded citation
    for (const citation of confident.citations) {
      expect(html).toContain(citation.doc_id);
      expect(html).toContain(citation.title);
    }
    expect(html).toMatchSnapshot();
  });

  it("disclaimer answer: banner text shown verbatim", () => {
    const html = answerView(disclaimer);
    expect(disclaimer.disclaimer).toBeTruthy();
    expect(html).toContain(
      "Low-confidence answer: the refinement budget was exhausted",
    );
    expect(html).toMatchSnapshot();
  });

  it("abstained answer: no citation chips rendered", () => {
    const html = answerView(abstained);
    expect(html).not.toContain("class=\"chip\"");
    expect(html).not.toContain("drilldown");
    expect(html).toContain("badge-red");
    expect(html).toMatchSnapshot();
  });

  it("irrelevant question: refusal text, zero citations", () => {
    const html = answerView(irrelevant);
    expect(html).toContain("outside the scope");
    expect(html).not.toContain("class=\"chip\"");
    expect(html).toMatchSnapshot();
  });
});

describe("claim evidence drill-down", () => {
  it("lists supports with offsets from the recorded table", () => {
    const html = claimEvidenceDrilldown(confident.claim_evidence);
    for (const row of confident.claim_evidence) {
      for (const support of row.supports) {
        expect(html).toContain(`${support.doc_id} #${support.span_id}`);
        expect(html).toContain(`offsets ${support.offsets[0]}-${support.offsets[1]}`);
      }
    }
    expect(html).toMatchSnapshot();
  });
});

describe("progress indicator", () => {
  it("derives state and iteration from the exported trace", () => {
    const html = progressIndicator(disclaimer.trace, disclaimer.iteration_i);
    expect(html).toContain("state: done");
    expect(html).toContain("iteration 5 of 5");
  });
});

describe("curation panel", () => {
  it("renders one row per missing-list entry", () => {
    const html = missingListTable(missing.entries);
    expect(html).toContain("doi:10.2/paywalled");
    expect(html).toContain("Unreachable Measurement Study");
    expect((html.match(/<tr data-canonical/g) ?? []).length).toBe(missing.entries.length);
    expect(html).toMatchSnapshot();
  });

  it("renders the empty state", () => {
    expect(missingListTable([])).toContain("Missing-List is empty");
  });

  it("renders upload outcome notices", () => {
    expect(uploadNotice(upload.status, upload.canonical)).toContain("requeued");
    expect(uploadNotice("needs-manual-fix", "doi:10.2/x")).toContain("banner-warn");
  });
});

describe("error affordance", () => {
  it("offers an inline retry", () => {
    const html = retryAffordance("service unreachable");
    expect(html).toContain("Retry");
    expect(html).toMatchSnapshot();
  });
});

describe("escaping", () => {
  it("never passes service text through unescaped", () => {
    const hostile = { ...irrelevant, answer: "<script>alert(1)</script>" };
    const html = answerView(hostile as AskResponse);
    expect(html).not.toContain("<script>alert");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("chips are service-data only", () => {
  it("renders nothing when the service returned no citations", () => {
    expect(citationChips([])).toBe("");
  });

  it("renders the recorded similarity to two decimals", () => {
    const html = citationChips(confident.citations);
    for (const citation of confident.citations) {
      expect(html).toContain(`sim ${citation.similarity.toFixed(2)}`);
    }
  });
});

describe("disclaimer banner", () => {
  it("is absent when the service sent none", () => {
    expect(disclaimerBanner(null)).toBe("");
  });
});
