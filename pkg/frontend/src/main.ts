// Browser wiring for the single-page console: connect, upload a detection
// report, read the fused recommendation, chat about it, leave feedback.

import { ApiError, LeafrxApi } from './api.js';
import type { RecommendationReportPayload } from './api.js';
import { renderError, renderReport, renderTranscript } from './render.js';
import { ChatController } from './session.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let api = new LeafrxApi(window.location.origin);
let chat = new ChatController(api);
let activeReport: RecommendationReportPayload | null = null;

function refreshReportView(): void {
  const container = el<HTMLDivElement>('report-view');
  if (activeReport) {
    container.innerHTML = renderReport(activeReport, chat.knownChunkTexts());
  }
}

function refreshChatView(): void {
  el<HTMLDivElement>('transcript').innerHTML = renderTranscript(chat.state.turns);
  const note = el<HTMLParagraphElement>('session-note');
  if (chat.state.expired) {
    note.textContent =
      'Session expired. Start a new session; the transcript above is kept for copy-out.';
  } else if (chat.state.sessionId) {
    note.textContent = `Session ${chat.state.sessionId}`;
  } else {
    note.textContent = 'No session yet.';
  }
  el<HTMLInputElement>('question').disabled = chat.state.inFlight || !chat.state.sessionId;
  el<HTMLButtonElement>('send').disabled = chat.state.inFlight || !chat.state.sessionId;
}

async function connect(): Promise<void> {
  const base = el<HTMLInputElement>('base-url').value || window.location.origin;
  const key = el<HTMLInputElement>('api-key').value || undefined;
  api = new LeafrxApi(base, undefined, key);
  chat = new ChatController(api);
  const status = el<HTMLSpanElement>('health');
  try {
    const health = await api.health();
    status.textContent = `ok, ${health.store_records} records`;
    status.className = 'status-ok';
  } catch (err) {
    status.textContent = String(err);
    status.className = 'status-err';
  }
  refreshChatView();
}

async function diagnose(): Promise<void> {
  const container = el<HTMLDivElement>('report-view');
  const raw = el<HTMLTextAreaElement>('report-json').value.trim();
  if (!raw) {
    container.innerHTML = renderError('Paste a DetectionReport JSON first.');
    return;
  }
  try {
    activeReport = await api.diagnose(raw);
    refreshReportView();
  } catch (err) {
    container.innerHTML = renderError(
      err instanceof ApiError ? `Diagnosis failed: ${err.message}` : String(err),
    );
  }
}

async function startSession(): Promise<void> {
  try {
    await chat.start();
  } catch (err) {
    el<HTMLParagraphElement>('session-note').textContent = `Cannot start session: ${err}`;
  }
  refreshChatView();
}

async function sendQuestion(): Promise<void> {
  const input = el<HTMLInputElement>('question');
  const question = input.value.trim();
  if (!question) return;
  refreshChatView();
  const outcome = await chat.send(question);
  if (outcome === 'answered') {
    input.value = '';
    refreshReportView(); // newly seen chunks can expand report citations
  }
  refreshChatView();
}

async function sendFeedback(): Promise<void> {
  const box = el<HTMLTextAreaElement>('feedback-text');
  const note = el<HTMLSpanElement>('feedback-note');
  if (!box.value.trim()) return;
  try {
    await api.feedback(box.value.trim());
    note.textContent = 'thanks!';
    box.value = '';
  } catch (err) {
    note.textContent = String(err);
  }
}

function loadReportFile(event: Event): void {
  const input = event.target as HTMLInputElement;
  const file = input.files?.[0];
  if (!file) return;
  file.text().then((text) => {
    el<HTMLTextAreaElement>('report-json').value = text;
  });
}

window.addEventListener('DOMContentLoaded', () => {
  el<HTMLButtonElement>('connect').addEventListener('click', () => void connect());
  el<HTMLButtonElement>('diagnose').addEventListener('click', () => void diagnose());
  el<HTMLButtonElement>('start-session').addEventListener('click', () => void startSession());
  el<HTMLButtonElement>('send').addEventListener('click', () => void sendQuestion());
  el<HTMLInputElement>('question').addEventListener('keydown', (event) => {
    if (event.key === 'Enter') void sendQuestion();
  });
  el<HTMLButtonElement>('send-feedback').addEventListener('click', () => void sendFeedback());
  el<HTMLInputElement>('report-file').addEventListener('change', loadReportFile);
  el<HTMLDivElement>('report-view').addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    if (target.dataset.action === 'retry') void diagnose();
  });
  void connect();
});
