// Chat session state. The server transcript is the source of truth; this
// controller mirrors it turn by turn and enforces one in-flight ask.

import { ApiError, LeafrxApi } from './api.js';
import type { TranscriptTurnPayload } from './api.js';

export interface UiSessionState {
  sessionId: string | null;
  turns: TranscriptTurnPayload[];
  inFlight: boolean;
  expired: boolean;
}

export type SendOutcome = 'answered' | 'ignored' | 'expired';

export class ChatController {
  state: UiSessionState = { sessionId: null, turns: [], inFlight: false, expired: false };

  constructor(private api: LeafrxApi) {}

  async start(): Promise<string> {
    const sessionId = await this.api.createSession();
    this.state = { sessionId, turns: [], inFlight: false, expired: false };
    return sessionId;
  }

  /** Post one question. Returns 'ignored' while a turn is in flight
   *  (double submits are dropped, matching server turn ordering). On
   *  session expiry the local transcript is preserved for copy-out. */
  async send(question: string): Promise<SendOutcome> {
    if (this.state.inFlight || this.state.sessionId === null || this.state.expired) {
      return 'ignored';
    }
    this.state.inFlight = true;
    try {
      const response = await this.api.ask(this.state.sessionId, question);
      this.state.turns.push({
        question,
        answer: response.answer,
        retrieval: response.retrieval,
      });
      return 'answered';
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.state.expired = true;
        return 'expired';
      }
      throw err;
    } finally {
      this.state.inFlight = false;
    }
  }

  /** Plain-text transcript for copy-out after expiry. */
  transcriptText(): string {
    return this.state.turns
      .map((turn) => `Q: ${turn.question}\nA: ${turn.answer.text}`)
      .join('\n\n');
  }

  /** Chunk texts seen in retrieval traces so far (used to expand report
   *  citations; the report payload itself carries chunk ids only). */
  knownChunkTexts(): Map<string, string> {
    const texts = new Map<string, string>();
    for (const turn of this.state.turns) {
      for (const hit of turn.retrieval.hits) {
        texts.set(hit.chunk_id, hit.text);
      }
    }
    return texts;
  }
}
