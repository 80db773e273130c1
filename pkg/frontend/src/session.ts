// Capture-session state machine.
//
// Phases: capturing -> (submit) -> reviewing -> (retake) -> capturing ...
// The session reaches "done" when an attempt is usable with confidence at or
// above the threshold, or when the operator explicitly accepts a result.
// At most one screen request is in flight; responses for superseded attempts
// are discarded by sequence number. State persists locally (and only
// locally) so a page reload resumes the session.

import type { ScreeningResult } from "./types.js";

export type Phase = "capturing" | "reviewing" | "done";

export interface Attempt {
  seq: number;
  thumbnail: string | null; // data URL; stays in the browser
  result: ScreeningResult;
}

export interface SessionSnapshot {
  attempts: Attempt[];
  phase: Phase;
  confidenceThreshold: number;
  accepted: boolean;
}

const CHECKLIST_AFTER_UNUSABLE = 3;

export const SETUP_CHECKLIST: readonly string[] = [
  "use a semi-dark room",
  "hold the camera about 1 m from the child",
  "have the child face a dark wall",
  "keep the flash enabled",
];

export class Session {
  private attempts: Attempt[] = [];
  private phase_: Phase = "capturing";
  private accepted = false;
  private seqCounter = 0;
  private inFlightSeq: number | null = null;
  private retryBanner_ = false;

  constructor(
    public confidenceThreshold: number = 0.8,
    private storage: Pick<Storage, "getItem" | "setItem" | "removeItem"> | null = null,
    private storageKey = "redreflex-session",
  ) {}

  get phase(): Phase {
    return this.phase_;
  }

  get history(): readonly Attempt[] {
    return this.attempts;
  }

  get retryBanner(): boolean {
    return this.retryBanner_;
  }

  get inFlight(): boolean {
    return this.inFlightSeq !== null;
  }

  get bestConfidence(): number {
    let best = 0;
    for (const a of this.attempts) {
      if (a.result.confidence !== null && a.result.confidence > best) {
        best = a.result.confidence;
      }
    }
    return best;
  }

  get lastAttempt(): Attempt | null {
    return this.attempts.length ? this.attempts[this.attempts.length - 1] : null;
  }

  /** Consecutive unusable attempts at the tail of the history. */
  get consecutiveUnusable(): number {
    let n = 0;
    for (let i = this.attempts.length - 1; i >= 0; i--) {
      if (this.attempts[i].result.usable) break;
      n++;
    }
    return n;
  }

  get showChecklist(): boolean {
    return this.consecutiveUnusable >= CHECKLIST_AFTER_UNUSABLE;
  }

  /** Start a capture; returns the attempt sequence number, or null while an
   * earlier request is still in flight. */
  beginAttempt(): number | null {
    if (this.phase_ === "done" || this.inFlightSeq !== null) return null;
    this.seqCounter += 1;
    this.inFlightSeq = this.seqCounter;
    this.retryBanner_ = false;
    return this.seqCounter;
  }

  /** Record a service response. Stale responses (superseded by a newer
   * capture) are discarded and the state is unchanged. */
  completeAttempt(seq: number, result: ScreeningResult, thumbnail: string | null = null): boolean {
    if (seq !== this.inFlightSeq) return false; // stale or unknown
    this.inFlightSeq = null;
    this.attempts.push({ seq, thumbnail, result });
    if (result.usable && result.confidence !== null
        && result.confidence >= this.confidenceThreshold) {
      this.phase_ = "done";
    } else {
      this.phase_ = "reviewing";
    }
    this.persist();
    return true;
  }

  /** Network failure: keep the session, surface a retry banner. */
  failAttempt(seq: number): void {
    if (seq !== this.inFlightSeq) return;
    this.inFlightSeq = null;
    this.retryBanner_ = true;
  }

  /** Operator chooses to take another photo. */
  retake(): void {
    if (this.phase_ === "reviewing") this.phase_ = "capturing";
    this.persist();
  }

  /** Operator explicitly accepts the latest result despite low confidence. */
  accept(): boolean {
    if (!this.attempts.length) return false;
    this.accepted = true;
    this.phase_ = "done";
    this.persist();
    return true;
  }

  reset(): void {
    this.attempts = [];
    this.phase_ = "capturing";
    this.accepted = false;
    this.inFlightSeq = null;
    this.retryBanner_ = false;
    if (this.storage) this.storage.removeItem(this.storageKey);
  }

  /** Exportable summary; attempt results are the service responses verbatim. */
  exportSession(): SessionSnapshot {
    return {
      attempts: this.attempts.map((a) => ({ ...a, result: a.result })),
      phase: this.phase_,
      confidenceThreshold: this.confidenceThreshold,
      accepted: this.accepted,
    };
  }

  exportJson(): string {
    return JSON.stringify(this.exportSession(), null, 2);
  }

  persist(): void {
    if (!this.storage) return;
    this.storage.setItem(this.storageKey, this.exportJson());
  }

  /** Restore a persisted session; returns true when something was loaded. */
  restore(): boolean {
    if (!this.storage) return false;
    const raw = this.storage.getItem(this.storageKey);
    if (!raw) return false;
    try {
      const snap = JSON.parse(raw) as SessionSnapshot;
      this.attempts = snap.attempts ?? [];
      this.phase_ = snap.phase ?? "capturing";
      this.accepted = snap.accepted ?? false;
      this.confidenceThreshold = snap.confidenceThreshold ?? this.confidenceThreshold;
      this.seqCounter = this.attempts.reduce((m, a) => Math.max(m, a.seq), 0);
      this.inFlightSeq = null;
      return true;
    } catch {
      return false;
    }
  }
}
